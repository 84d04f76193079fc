"""Exact optimal transport between equal-size sparse measures.

Squared distances follow the unnormalized convention

    W2^2(mu, nu) = min_sigma sum_i ||w_i - v_sigma(i)||^2

without the 1/n factor. Every rate constant elsewhere in the package uses
this convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .measure import SparseMeasure

_T_CLAMP = 1e-12


@dataclass(frozen=True)
class TransportPlan:
    """Optimal assignment ``i -> permutation[i]`` and its squared cost."""

    permutation: np.ndarray
    squared_cost: float

    def target_of(self, nu: SparseMeasure) -> np.ndarray:
        """Rows ``T(w_i) = v_{sigma(i)}`` of ``nu``, aligned with the source."""
        return nu.particles[self.permutation]


def _check_pair(mu: SparseMeasure, nu: SparseMeasure):
    if mu.n != nu.n:
        raise ValueError(f"size mismatch: {mu.n} vs {nu.n} particles")
    if mu.d != nu.d:
        raise ValueError(f"dimension mismatch: d={mu.d} vs d={nu.d}")


def assignment_cost(w: np.ndarray, v: np.ndarray, perm) -> float:
    """sum_i ||w_i - v_perm(i)||^2, summed in ascending order of the terms.

    Summing sorted terms makes the result depend only on the multiset of
    squared distances, so optimal plans that differ by swapping tied
    particles report bitwise equal costs.
    """
    diff = w - v[np.asarray(perm)]
    return float(np.sum(np.sort(np.sum(diff * diff, axis=1))))


def monotone_permutation(w: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Sorted matching for scalars; stable sorts give lowest-index tie breaks."""
    order_w = np.argsort(w, kind="stable")
    order_v = np.argsort(v, kind="stable")
    perm = np.empty(len(w), dtype=np.intp)
    perm[order_w] = order_v
    return perm


def assignment_permutation(w: np.ndarray, v: np.ndarray) -> np.ndarray:
    """General O(n^3) assignment under squared Euclidean cost."""
    cost = np.sum((w[:, None, :] - v[None, :, :]) ** 2, axis=-1)
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(len(w), dtype=np.intp)
    perm[rows] = cols
    return perm


def optimal_plan(mu: SparseMeasure, nu: SparseMeasure, method: str = "auto") -> TransportPlan:
    """Minimum-cost permutation between two n-sparse measures.

    Parameters
    ----------
    mu, nu : SparseMeasure
        Source and target, with equal n and d.
    method : {"auto", "sort", "assignment"}
        ``auto`` sorts when d == 1 and runs the assignment solver otherwise.
    """
    _check_pair(mu, nu)
    w, v = mu.particles, nu.particles
    if method == "auto":
        method = "sort" if mu.d == 1 else "assignment"
    if method == "sort":
        if mu.d != 1:
            raise ValueError("the sorting path only applies to d == 1")
        perm = monotone_permutation(w[:, 0], v[:, 0])
    elif method == "assignment":
        perm = assignment_permutation(w, v)
    else:
        raise ValueError(f"unknown method {method!r}")
    perm.setflags(write=False)
    return TransportPlan(perm, assignment_cost(w, v, perm))


def w2_squared(mu: SparseMeasure, nu: SparseMeasure) -> float:
    """Unnormalized squared Wasserstein-2 distance."""
    return optimal_plan(mu, nu).squared_cost


def displacement_interpolate(mu: SparseMeasure, nu: SparseMeasure, t: float) -> SparseMeasure:
    """Particles ``(1 - t) w_i + t v_sigma*(i)`` along the optimal map."""
    if not -_T_CLAMP <= t <= 1.0 + _T_CLAMP:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    t = min(max(float(t), 0.0), 1.0)
    plan = optimal_plan(mu, nu)
    w = mu.particles
    if t == 0.0:
        return SparseMeasure._trusted(w)
    target = plan.target_of(nu)
    if t == 1.0:
        return SparseMeasure._trusted(target)
    return SparseMeasure._trusted((1.0 - t) * w + t * target)
