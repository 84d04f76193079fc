"""Numerical checks of convexity-type inequalities on concrete measures.

Each checker evaluates an inequality on given measures and returns a report
with the signed residual (positive means the inequality holds with slack).
None of them prove anything; they sample.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .measure import SparseMeasure
from .objectives import Objective, RegularityInfo
from .optim import StepSchedule, gd
from .transport import displacement_interpolate, optimal_plan

DEFAULT_TOL = 1e-8
DEFAULT_T_GRID = tuple(round(0.1 * i, 1) for i in range(1, 10))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


@dataclass
class JensenReport:
    ts: list
    residuals: list
    tol: float

    @property
    def max_violation(self) -> float:
        return float(max(-r for r in self.residuals))

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tol

    def to_dict(self):
        return _jsonable({**asdict(self), "max_violation": self.max_violation,
                          "passed": self.passed})


def check_displacement_jensen(objective: Objective, mu: SparseMeasure, nu: SparseMeasure,
                              lam: float, t_grid=DEFAULT_T_GRID, tol: float = DEFAULT_TOL):
    """Residuals of the lam-displacement convexity inequality along mu_t.

    residual(t) = (1-t) F(mu) + t F(nu) - lam/2 t(1-t) W2^2 - F(mu_t)
    """
    ts = [float(t) for t in t_grid]
    if any(not 0.0 < t < 1.0 for t in ts):
        raise ValueError("t_grid must lie inside (0, 1)")
    f_mu, f_nu = objective.value(mu), objective.value(nu)
    w2 = optimal_plan(mu, nu).squared_cost
    res = []
    for t in ts:
        f_t = objective.value(displacement_interpolate(mu, nu, t))
        res.append((1 - t) * f_mu + t * f_nu - 0.5 * lam * t * (1 - t) * w2 - f_t)
    return JensenReport(ts, res, tol)


@dataclass
class StarReport:
    lhs: float
    rhs: float
    tol: float

    @property
    def margin(self) -> float:
        return self.lhs - self.rhs

    @property
    def passed(self) -> bool:
        return self.margin >= -self.tol

    def to_dict(self):
        return _jsonable({**asdict(self), "margin": self.margin, "passed": self.passed})


def check_star_convexity(objective: Objective, mu: SparseMeasure, mu_hat: SparseMeasure,
                         tol: float = DEFAULT_TOL) -> StarReport:
    """sum_i <w_i - T(w_i), dF/dw_i(mu)> against F(mu) - F(mu_hat)."""
    plan = optimal_plan(mu, mu_hat)
    g = objective.gradient(mu)
    lhs = float(np.sum((mu.particles - plan.target_of(mu_hat)) * g))
    rhs = objective.value(mu) - objective.value(mu_hat)
    return StarReport(lhs, rhs, tol)


# Gating entries of the smoothness report; the rest are findings.
SMOOTHNESS_KEYS = ("i", "ii", "iii", "iv", "v")


@dataclass
class SmoothnessReport:
    residuals: dict
    findings: dict
    tol: float

    @property
    def passed(self) -> bool:
        return all(self.residuals[k] >= -self.tol for k in SMOOTHNESS_KEYS)

    def to_dict(self):
        return _jsonable({**asdict(self), "passed": self.passed})


def check_smoothness_consequences(objective: Objective, mu: SparseMeasure, nu: SparseMeasure,
                                  lam: float | None = None, ell: float | None = None,
                                  tol: float = DEFAULT_TOL, max_pairs: int = 200):
    """Residuals of the five consequences of ell-smoothness plus lam-convexity.

    T is the optimal map from mu to nu. Gating residuals:

    i    ell^2 W2^2 - sum ||g_mu(w_i) - g_nu(T w_i)||^2  (squared-norm form)
    ii   ell ||w - w'|| - ||grad F(w) - grad F(w')|| for w' = w with two
         particles swapped, worst pair
    iii  F(nu) - F(mu) - sum <g_mu(w_i), T w_i - w_i> - 1/(2 ell) sum ||D_i||^2
    iv   sum <g_nu(T w_i) - g_mu(w_i), T w_i - w_i> - 1/ell sum ||D_i||^2
    v    sum <g_mu(w_i) - g_nu(T w_i), w_i - T w_i> - lam ell/(ell+lam) W2^2
         - 1/(lam+ell) sum ||D_i||^2

    with D_i = g_nu(T w_i) - g_mu(w_i). ``findings`` holds the unsquared
    form of (i) and, where the objective exposes a gradient field, the
    literal readings of (iv) and (v) that evaluate the gradient at nu on the
    location w_i.
    """
    reg = objective.regularity
    lam = reg.lam if lam is None else lam
    ell = reg.smoothness if ell is None else ell
    if ell is None:
        raise ValueError("objective declares no smoothness constant")
    lam = 0.0 if lam is None else lam
    plan = optimal_plan(mu, nu)
    w = mu.particles
    tw = plan.target_of(nu)
    g_mu = objective.gradient(mu)
    g_nu_t = objective.gradient(nu)[plan.permutation]
    w2 = plan.squared_cost
    disp = tw - w
    diff = g_nu_t - g_mu
    diff_sq = float(np.sum(diff * diff))
    f_mu, f_nu = objective.value(mu), objective.value(nu)

    res = {}
    res["i"] = ell**2 * w2 - diff_sq
    res["ii"] = _swap_residual(objective, mu, ell, max_pairs)
    res["iii"] = f_nu - f_mu - float(np.sum(g_mu * disp)) - diff_sq / (2 * ell)
    res["iv"] = float(np.sum(diff * disp)) - diff_sq / ell
    res["v"] = (float(np.sum(-diff * -disp)) - lam * ell / (ell + lam) * w2
                - diff_sq / (lam + ell))

    findings = {"i_sum_of_norms": ell**2 * w2 - float(np.sum(np.linalg.norm(diff, axis=1)))}
    try:
        field_nu_at_w = objective.gradient_field(nu, w)
    except NotImplementedError:
        findings["iv_literal"] = None
        findings["v_literal"] = None
    else:
        findings["iv_literal"] = float(np.sum((g_nu_t - field_nu_at_w) * disp)) - diff_sq / ell
        lit = g_mu - field_nu_at_w
        findings["v_literal"] = (float(np.sum(-diff * -disp)) - lam * ell / (ell + lam) * w2
                                 - float(np.sum(lit * lit)) / (lam + ell))
    return SmoothnessReport(res, findings, tol)


def _swap_residual(objective, mu, ell, max_pairs):
    n = mu.n
    if n < 2:
        return 0.0
    w = mu.particles
    g = objective.gradient(mu)
    worst = math.inf
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)][:max_pairs]
    for i, j in pairs:
        perm = np.arange(n)
        perm[[i, j]] = perm[[j, i]]
        swapped = mu.permuted(perm)
        g_sw = objective.gradient(swapped)
        lhs = np.linalg.norm(g - g_sw)
        rhs = ell * np.linalg.norm(w - swapped.particles)
        worst = min(worst, float(rhs - lhs))
    return worst


@dataclass
class ContractionReport:
    ratios: list
    bounds: list
    tol: float

    @property
    def passed(self) -> bool:
        return all(r <= b + self.tol for r, b in zip(self.ratios, self.bounds))

    def to_dict(self):
        return _jsonable({**asdict(self), "passed": self.passed})


def check_contraction(objective: Objective, schedule: StepSchedule, init: SparseMeasure,
                      target: SparseMeasure, iters: int, tol: float = 1e-10):
    """Per-step W2^2 ratios to the minimizer against 1 - 2 lam ell gamma/(ell + lam)."""
    reg = objective.regularity
    lam, ell = reg.lam, reg.smoothness
    if lam is None or not lam > 0 or ell is None:
        raise ValueError("contraction needs a declared lam > 0 and smoothness")
    gammas = [schedule(k) for k in range(1, iters + 1)]
    if max(gammas) > 2.0 / (ell + lam) * (1 + 1e-15):
        raise ValueError(f"stepsize exceeds 2/(ell+lam) = {2.0 / (ell + lam)}")
    traj = gd(objective, init, schedule, iters, reference=target, record_min_gap=False)
    w2 = traj.w2sq
    ratios, bounds = [], []
    for k in range(iters):
        ratios.append(0.0 if w2[k] == 0.0 else float(w2[k + 1] / w2[k]))
        bounds.append(1.0 - 2.0 * lam * ell * gammas[k] / (ell + lam))
    return ContractionReport(ratios, bounds, tol)


def finite_difference_gradient(objective: Objective, mu: SparseMeasure,
                               step: float = 1e-5) -> np.ndarray:
    """Central-difference estimate of every dF/dw_i, coordinate by coordinate."""
    if not step > 0:
        raise ValueError("step must be > 0")
    x = np.array(mu.particles)
    out = np.empty_like(x)
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            orig = x[i, j]
            x[i, j] = orig + step
            fp = objective.value(SparseMeasure._trusted(x))
            x[i, j] = orig - step
            fm = objective.value(SparseMeasure._trusted(x))
            x[i, j] = orig
            if not (math.isfinite(fp) and math.isfinite(fm)):
                raise FloatingPointError(f"non-finite value while perturbing particle {i}")
            out[i, j] = (fp - fm) / (2 * step)
    return out


def gradient_relative_error(objective: Objective, mu: SparseMeasure, step: float = 1e-5) -> float:
    """||analytic - FD|| / max(||analytic||, ||FD||), with a 1e-12 floor."""
    g = objective.gradient(mu)
    fd = finite_difference_gradient(objective, mu, step)
    scale = max(np.linalg.norm(g), np.linalg.norm(fd), 1e-12)
    return float(np.linalg.norm(g - fd) / scale)


def empirical_modulus(objective: Objective, pairs, t_grid=DEFAULT_T_GRID, hi: float = 10.0,
                      iters: int = 40, tol: float = DEFAULT_TOL) -> float:
    """Largest lam in [0, hi] passing the Jensen check on every pair (bisection).

    Returns -inf when even lam = 0 fails.
    """
    def ok(lam):
        return all(check_displacement_jensen(objective, a, b, lam, t_grid, tol).passed
                   for a, b in pairs)

    if not ok(0.0):
        return -math.inf
    if ok(hi):
        return hi
    lo = 0.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return lo


# -- planted counterexamples for testing the checkers --------------------------


class NegatedObjective(Objective):
    """-F, claimed (falsely) to be displacement convex."""

    def __init__(self, base: Objective):
        self.base = base
        self.regularity = RegularityInfo(lam=0.0)
        self.dim, self.count = base.dim, base.count

    def _value(self, x):
        return -self.base._value(x)

    def _gradient(self, x):
        return -self.base._gradient(x)


class PerturbedGradient(Objective):
    """Same values as ``base``; every gradient entry shifted by ``delta``."""

    def __init__(self, base: Objective, delta: float = 1e-2):
        self.base = base
        self.delta = delta
        self.regularity = base.regularity
        self.dim, self.count = base.dim, base.count

    def _value(self, x):
        return self.base._value(x)

    def _gradient(self, x):
        return self.base._gradient(x) + self.delta
