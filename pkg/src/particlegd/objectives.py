"""Objective functions of sparse measures.

Every objective evaluates ``F((1/n) sum_i delta_{w_i})`` and the per-particle
gradients ``dF/dw_i``. Evaluation happens on a canonical (sorted) ordering of
the particles so values are bitwise permutation invariant and gradients are
bitwise permutation equivariant.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .measure import SparseMeasure
from .transport import optimal_plan

__all__ = [
    "RegularityInfo",
    "Objective",
    "EnergyDistanceDiscrete",
    "EnergyDistanceUniform",
    "GaussianKernel",
    "LaplacianKernel",
    "EnergyKernel",
    "MMDObjective",
    "W2Objective",
    "TensorObjective",
    "CircleNetTarget",
    "CircleNetObjective",
    "QuadraticWell",
    "energy_distance_discrete",
    "energy_distance_uniform",
    "mmd_objective",
    "w2_objective",
    "tensor_objective",
    "circle_net_objective",
    "quadratic_well",
    "circle_net_monte_carlo",
]


@dataclass(frozen=True)
class RegularityInfo:
    """Declared regularity constants of an objective.

    ``lam`` is the displacement convexity modulus, ``smoothness`` the
    smoothness constant and ``lipschitz`` the gradient bound. ``None`` means
    the property is not claimed.
    """

    lam: float | None = None
    smoothness: float | None = None
    lipschitz: float | None = None
    star_convex: bool = False

    def __post_init__(self):
        if self.lam is not None and self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.smoothness is not None and self.smoothness <= 0:
            raise ValueError("smoothness must be > 0")
        if self.lipschitz is not None and self.lipschitz <= 0:
            raise ValueError("lipschitz must be > 0")
        if self.lam is not None and self.smoothness is not None and self.lam > self.smoothness:
            raise ValueError("lam cannot exceed smoothness")


def _canonical_order(x: np.ndarray) -> np.ndarray:
    if x.shape[1] == 1:
        return np.argsort(x[:, 0], kind="stable")
    return np.lexsort(x.T[::-1])


class Objective(ABC):
    """Function of an n-sparse measure with per-particle gradients.

    Subclasses implement ``_value`` and ``_gradient`` on a canonically
    ordered ``(n, d)`` array.
    """

    regularity: RegularityInfo = RegularityInfo()
    #: required particle dimension, or None
    dim: int | None = None
    #: required particle count, or None
    count: int | None = None

    def _check(self, mu: SparseMeasure):
        if self.dim is not None and mu.d != self.dim:
            raise ValueError(f"{type(self).__name__} expects d={self.dim}, got d={mu.d}")
        if self.count is not None and mu.n != self.count:
            raise ValueError(f"{type(self).__name__} expects n={self.count}, got n={mu.n}")

    def value(self, mu: SparseMeasure) -> float:
        self._check(mu)
        x = mu.particles
        return float(self._value(x[_canonical_order(x)]))

    def gradient(self, mu: SparseMeasure) -> np.ndarray:
        """Array of shape (n, d) whose row i is dF/dw_i."""
        self._check(mu)
        x = mu.particles
        order = _canonical_order(x)
        g = np.empty_like(x)
        g[order] = self._gradient(x[order])
        return g

    def gradient_field(self, mu: SparseMeasure, x) -> np.ndarray:
        """Per-particle gradient a particle located at ``x`` would receive.

        Defined when dF/dw_i depends on the measure and on w_i only; used to
        evaluate inequalities that mix a measure with a foreign location.
        """
        raise NotImplementedError(f"{type(self).__name__} has no gradient field")

    @abstractmethod
    def _value(self, x: np.ndarray) -> float: ...

    @abstractmethod
    def _gradient(self, x: np.ndarray) -> np.ndarray: ...


# -- one-dimensional helpers -------------------------------------------------


def _abs_sums(x: np.ndarray, ys: np.ndarray, prefix: np.ndarray) -> np.ndarray:
    """sum_j |x_k - ys_j| for each x_k, with ``ys`` sorted and its prefix sums."""
    m = len(ys)
    cnt = np.searchsorted(ys, x, side="left")
    below = prefix[cnt]
    return x * cnt - below + (prefix[m] - below) - x * (m - cnt)


def _sign_sums(x: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """sum_j sign(x_k - ys_j) with sign(0) = 0, ``ys`` sorted."""
    less = np.searchsorted(ys, x, side="left")
    greater = len(ys) - np.searchsorted(ys, x, side="right")
    return (less - greater).astype(np.float64)


def _pair_abs_sum(xs: np.ndarray) -> float:
    """sum_{i,j} |x_i - x_j| over ordered pairs, ``xs`` sorted."""
    n = len(xs)
    k = np.arange(n, dtype=np.float64)
    return float(2.0 * np.sum((2.0 * k - (n - 1)) * xs))


def _prefix(ys: np.ndarray) -> np.ndarray:
    return np.concatenate(([0.0], np.cumsum(ys)))


class _EnergyDistance1D(Objective):
    """E(mu, nu) = 2 int|x-y| dmu dnu - int|x-y| dmu dmu - int|x-y| dnu dnu.

    Subclasses provide the target potential h(x) = int |x - v| dnu(v), its
    derivative and the constant int int |v - v'| dnu dnu.
    """

    dim = 1

    @abstractmethod
    def potential(self, x: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def potential_grad(self, x: np.ndarray) -> np.ndarray: ...

    target_self: float

    def _value(self, x):
        w = x[:, 0]
        n = len(w)
        return 2.0 / n * np.sum(self.potential(w)) - _pair_abs_sum(w) / n**2 - self.target_self

    def _gradient(self, x):
        w = x[:, 0]
        n = len(w)
        g = 2.0 / n * self.potential_grad(w) - 2.0 / n**2 * _sign_sums(w, w)
        return g[:, None]

    def gradient_field(self, mu, x):
        self._check(mu)
        pts = np.asarray(x, dtype=np.float64).reshape(-1)
        w = np.sort(mu.particles[:, 0])
        n = len(w)
        g = 2.0 / n * self.potential_grad(pts) - 2.0 / n**2 * _sign_sums(pts, w)
        return g[:, None]

    # Weighted atomic measures, used by Frank-Wolfe.

    def weighted_value(self, atoms, weights) -> float:
        atoms = np.asarray(atoms, dtype=np.float64)
        weights = np.asarray(weights, dtype=np.float64)
        cross = np.abs(atoms[:, None] - atoms[None, :])
        return float(2.0 * weights @ self.potential(atoms) - weights @ cross @ weights - self.target_self)

    def first_variation(self, atoms, weights, x) -> np.ndarray:
        """Functional derivative of F at sum_k weights_k delta_{atoms_k}, on points x."""
        x = np.asarray(x, dtype=np.float64)
        atoms = np.asarray(atoms, dtype=np.float64)
        mix = np.abs(x[:, None] - atoms[None, :]) @ np.asarray(weights, dtype=np.float64)
        return 2.0 * self.potential(x) - 2.0 * mix


class EnergyDistanceDiscrete(_EnergyDistance1D):
    """Energy distance to a fixed n-sparse target on the real line.

    Equals ``(2 sum|w_i - v_j| - sum|v_i - v_j| - sum|w_i - w_j|) / n^2``.
    """

    regularity = RegularityInfo(lam=0.0, lipschitz=2.0, star_convex=True)

    def __init__(self, nu: SparseMeasure):
        if nu.d != 1:
            raise ValueError(f"energy distance is one-dimensional, target has d={nu.d}")
        self.nu = nu
        self.count = nu.n
        self._v = np.sort(nu.particles[:, 0])
        self._prefix = _prefix(self._v)
        self.target_self = _pair_abs_sum(self._v) / nu.n**2

    def potential(self, x):
        return _abs_sums(x, self._v, self._prefix) / len(self._v)

    def potential_grad(self, x):
        return _sign_sums(x, self._v) / len(self._v)


class EnergyDistanceUniform(_EnergyDistance1D):
    """Energy distance to the uniform law on [a, b], integrals in closed form.

    With density 1/(b - a) the potential is ``((x-a)^2 + (b-x)^2) / (2(b-a))``
    inside the interval and ``|x - (a+b)/2|`` outside; the self term is
    ``(b - a) / 3``.
    """

    regularity = RegularityInfo(lam=0.0, lipschitz=2.0, star_convex=True)

    def __init__(self, a: float = -1.0, b: float = 1.0):
        if not a < b:
            raise ValueError(f"need a < b, got a={a}, b={b}")
        self.a, self.b = float(a), float(b)
        self.target_self = (self.b - self.a) / 3.0

    def potential(self, x):
        a, b = self.a, self.b
        inside = ((x - a) ** 2 + (b - x) ** 2) / (2.0 * (b - a))
        outside = np.abs(x - 0.5 * (a + b))
        return np.where((x >= a) & (x <= b), inside, outside)

    def potential_grad(self, x):
        a, b = self.a, self.b
        inside = (2.0 * x - a - b) / (b - a)
        return np.where((x >= a) & (x <= b), inside, np.sign(x - 0.5 * (a + b)))


# -- kernels and MMD -----------------------------------------------------------


def _diffs(X, Y):
    return X[:, None, :] - Y[None, :, :]


@dataclass(frozen=True)
class GaussianKernel:
    """K(x, y) = exp(-||x - y||^2 / (2 h^2))."""

    bandwidth: float = 1.0

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be > 0")

    def __call__(self, X, Y):
        D = _diffs(X, Y)
        return np.exp(-np.sum(D * D, axis=-1) / (2.0 * self.bandwidth**2))

    def grad1(self, X, Y):
        D = _diffs(X, Y)
        K = np.exp(-np.sum(D * D, axis=-1) / (2.0 * self.bandwidth**2))
        return -D * (K / self.bandwidth**2)[..., None]


@dataclass(frozen=True)
class LaplacianKernel:
    """K(x, y) = exp(-||x - y|| / h); gradient taken as 0 at x == y."""

    bandwidth: float = 1.0

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be > 0")

    def __call__(self, X, Y):
        return np.exp(-np.linalg.norm(_diffs(X, Y), axis=-1) / self.bandwidth)

    def grad1(self, X, Y):
        D = _diffs(X, Y)
        r = np.linalg.norm(D, axis=-1)
        K = np.exp(-r / self.bandwidth)
        unit = np.divide(D, r[..., None], out=np.zeros_like(D), where=r[..., None] > 0)
        return -unit * (K / self.bandwidth)[..., None]


@dataclass(frozen=True)
class EnergyKernel:
    """K(x, y) = -||x - y||; MMD^2 under this kernel is the energy distance."""

    def __call__(self, X, Y):
        return -np.linalg.norm(_diffs(X, Y), axis=-1)

    def grad1(self, X, Y):
        D = _diffs(X, Y)
        r = np.linalg.norm(D, axis=-1)
        return -np.divide(D, r[..., None], out=np.zeros_like(D), where=r[..., None] > 0)


class MMDObjective(Objective):
    """Squared maximum mean discrepancy to a fixed sparse target.

    ``MMD^2 = mean K(w, w') - 2 mean K(w, v) + mean K(v, v')``. The target may
    have a different number of particles than the optimized measure.
    """

    def __init__(self, kernel, nu: SparseMeasure):
        self.kernel = kernel
        self.nu = nu
        self.dim = nu.d
        v = nu.particles
        self._v = v[_canonical_order(v)]
        self._vv = float(np.mean(kernel(self._v, self._v)))

    def _value(self, x):
        k = self.kernel
        return np.mean(k(x, x)) - 2.0 * np.mean(k(x, self._v)) + self._vv

    def _field(self, pts, x):
        n = len(x)
        k = self.kernel
        return 2.0 / n * (k.grad1(pts, x).mean(axis=1) - k.grad1(pts, self._v).mean(axis=1))

    def _gradient(self, x):
        return self._field(x, x)

    def gradient_field(self, mu, x):
        self._check(mu)
        p = mu.particles
        return self._field(np.atleast_2d(np.asarray(x, dtype=np.float64)), p[_canonical_order(p)])


# -- W2 to a fixed target --------------------------------------------------------


class W2Objective(Objective):
    """``W2^2(mu, nu)`` for a fixed target, re-solving the assignment each call.

    The gradient ``2 (w_i - v_sigma*(i))`` is exact away from assignment ties.
    """

    regularity = RegularityInfo(smoothness=2.0, star_convex=True)

    def __init__(self, nu: SparseMeasure):
        self.nu = nu
        self.dim = nu.d
        self.count = nu.n

    def _value(self, x):
        return optimal_plan(SparseMeasure._trusted(x), self.nu).squared_cost

    def _gradient(self, x):
        plan = optimal_plan(SparseMeasure._trusted(x), self.nu)
        return 2.0 * (x - plan.target_of(self.nu))


# -- orthogonal tensor decomposition -----------------------------------------------


class TensorObjective(Objective):
    """G(mu) = -sum_i sum_j <v_i, w_j / ||w_j||>^3 for an orthonormal basis v."""

    regularity = RegularityInfo(star_convex=True)

    def __init__(self, basis):
        basis = np.atleast_2d(np.asarray(basis, dtype=np.float64))
        k, d = basis.shape
        if k > d:
            raise ValueError(f"need at most d={d} basis vectors, got {k}")
        if not np.allclose(basis @ basis.T, np.eye(k), rtol=0.0, atol=1e-10):
            raise ValueError("basis vectors must be orthonormal")
        self.basis = basis
        self.dim = d

    def _normalize(self, x):
        r = np.linalg.norm(x, axis=1, keepdims=True)
        if np.any(r == 0):
            raise ValueError("tensor objective is undefined at a zero particle")
        return x / r, r

    def _value(self, x):
        u, _ = self._normalize(x)
        return -np.sum((u @ self.basis.T) ** 3)

    def _gradient(self, x):
        u, r = self._normalize(x)
        gu = -3.0 * ((u @ self.basis.T) ** 2) @ self.basis
        # Chain rule through w / ||w||: (I - u u^T) / ||w||.
        return (gu - np.sum(gu * u, axis=1, keepdims=True) * u) / r

    def gradient_field(self, mu, x):
        self._check(mu)
        return self._gradient(np.atleast_2d(np.asarray(x, dtype=np.float64)))

    def minimizer(self) -> SparseMeasure:
        return SparseMeasure(self.basis)


# -- neurons on the circle ----------------------------------------------------------

_TWO_PI = 2.0 * math.pi


def _wrap_dist(a, b):
    """Angle between directions a and b, in [0, pi]."""
    delta = np.mod(a - b, _TWO_PI)
    return np.minimum(delta, _TWO_PI - delta)


def _wrap_sign(a, b):
    """Derivative in a of the wrapped distance; 0 at coincidence and antipode."""
    delta = np.mod(a - b, _TWO_PI)
    return np.where((delta > 0) & (delta < math.pi), 1.0, np.where(delta > math.pi, -1.0, 0.0))


@dataclass(frozen=True)
class CircleNetTarget:
    """Target neuron measure on the upper half circle, by angle.

    Either ``angles`` (an m-sparse target, each in [0, pi)) or an ``arc``
    ``(a, b)`` with ``0 <= a < b <= pi`` carrying the uniform law.
    """

    angles: tuple | None = None
    arc: tuple | None = None

    def __post_init__(self):
        if (self.angles is None) == (self.arc is None):
            raise ValueError("give exactly one of angles or arc")
        if self.angles is not None:
            ang = np.asarray(self.angles, dtype=np.float64).reshape(-1)
            if ang.size == 0 or np.any(ang < 0) or np.any(ang >= math.pi):
                raise ValueError("sparse target angles must lie in [0, pi)")
            object.__setattr__(self, "angles", tuple(float(t) for t in ang))
        else:
            a, b = map(float, self.arc)
            if not (0.0 <= a < b <= math.pi):
                raise ValueError("arc must satisfy 0 <= a < b <= pi")
            object.__setattr__(self, "arc", (a, b))

    def response(self, psi: np.ndarray) -> np.ndarray:
        """f(x) for inputs x = (cos psi, sin psi), computed neuron by neuron."""
        if self.angles is not None:
            ang = np.asarray(self.angles)
            return np.mean(np.cos(psi[:, None] - ang[None, :]) > 0, axis=1)
        # Length of the arc inside the open half circle centered at psi.
        a, b = self.arc
        total = np.zeros_like(psi)
        for shift in (-_TWO_PI, 0.0, _TWO_PI):
            lo = np.maximum(a, psi + shift - math.pi / 2)
            hi = np.minimum(b, psi + shift + math.pi / 2)
            total += np.clip(hi - lo, 0.0, None)
        return total / (b - a)


class CircleNetObjective(Objective):
    """Mean squared error of a zero-one neuron network on the unit circle.

    Particles are neuron angles theta_i. For inputs uniform on the circle,
    ``E_x[phi(x.w) phi(x.v)] = (pi - angle(w, v)) / (2 pi)``, which turns the
    loss into an energy distance between angles under the wrapped metric,
    divided by 2 pi.
    """

    dim = 1

    def __init__(self, target: CircleNetTarget):
        self.target = target
        if target.angles is not None:
            self._v = np.sort(np.asarray(target.angles))
            self._self = float(np.mean(_wrap_dist(self._v[:, None], self._v[None, :])))
        else:
            a, b = target.arc
            self._center = 0.5 * (a + b)
            self._half = 0.5 * (b - a)
            self._self = (b - a) / 3.0
        self.regularity = RegularityInfo(lam=0.0, lipschitz=1.0 / math.pi, star_convex=True)

    def _arc_potential(self, theta):
        h = self._half
        s = _wrap_dist(theta, self._center)
        near = (s * s + h * h) / (2.0 * h)
        wrapped = math.pi - h / 2.0 - (math.pi - s) ** 2 / (2.0 * h)
        return np.where(s <= h, near, np.where(s <= math.pi - h, s, wrapped))

    def _arc_potential_grad(self, theta):
        h = self._half
        s = _wrap_dist(theta, self._center)
        ds = _wrap_sign(theta, self._center)
        slope = np.where(s <= h, s / h, np.where(s <= math.pi - h, 1.0, (math.pi - s) / h))
        return slope * ds

    def potential(self, theta):
        if self.target.angles is not None:
            return np.mean(_wrap_dist(theta[:, None], self._v[None, :]), axis=1)
        return self._arc_potential(theta)

    def potential_grad(self, theta):
        if self.target.angles is not None:
            return np.mean(_wrap_sign(theta[:, None], self._v[None, :]), axis=1)
        return self._arc_potential_grad(theta)

    def _value(self, x):
        th = x[:, 0]
        n = len(th)
        pair = np.sum(_wrap_dist(th[:, None], th[None, :]))
        e = 2.0 / n * np.sum(self.potential(th)) - pair / n**2 - self._self
        return e / _TWO_PI

    def _gradient(self, x):
        th = x[:, 0]
        n = len(th)
        rep = np.sum(_wrap_sign(th[:, None], th[None, :]), axis=1)
        g = (2.0 / n * self.potential_grad(th) - 2.0 / n**2 * rep) / _TWO_PI
        return g[:, None]

    def network(self, mu: SparseMeasure, psi: np.ndarray) -> np.ndarray:
        """f_n(x) = (1/n) sum_i phi(x . w_i) at inputs x = (cos psi, sin psi)."""
        th = mu.particles[:, 0]
        return np.mean(np.cos(psi[:, None] - th[None, :]) > 0, axis=1)


def circle_net_monte_carlo(objective: CircleNetObjective, mu: SparseMeasure,
                           n_samples: int = 10**6, seed=0, chunk: int = 200_000):
    """Monte Carlo estimate of E_x (f_n(x) - f(x))^2 and its standard error.

    Evaluates the neurons directly on sampled inputs, independently of the
    closed form used by ``CircleNetObjective.value``.
    """
    rng = np.random.default_rng(seed)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        psi = rng.uniform(0.0, _TWO_PI, size=m)
        r = (objective.network(mu, psi) - objective.target.response(psi)) ** 2
        total += r.sum()
        total_sq += (r * r).sum()
        done += m
    mean = total / n_samples
    var = max(total_sq / n_samples - mean**2, 0.0)
    return float(mean), float(math.sqrt(var / (n_samples - 1)))


# -- quadratic test fixture ------------------------------------------------------------


class QuadraticWell(Objective):
    """F(mu) = sum_i ||w_i - c||^2, exactly 2-displacement convex and 2-smooth."""

    regularity = RegularityInfo(lam=2.0, smoothness=2.0, star_convex=True)

    def __init__(self, center):
        self.center = np.atleast_1d(np.asarray(center, dtype=np.float64))
        self.dim = self.center.shape[0]

    def _value(self, x):
        diff = x - self.center
        return np.sum(np.sum(diff * diff, axis=1))

    def _gradient(self, x):
        return 2.0 * (x - self.center)

    def gradient_field(self, mu, x):
        self._check(mu)
        return 2.0 * (np.atleast_2d(np.asarray(x, dtype=np.float64)) - self.center)

    def minimizer(self, n: int) -> SparseMeasure:
        return SparseMeasure(np.tile(self.center, (n, 1)))


# Factory spellings matching the catalog names.

def energy_distance_discrete(nu: SparseMeasure) -> EnergyDistanceDiscrete:
    return EnergyDistanceDiscrete(nu)


def energy_distance_uniform(a: float = -1.0, b: float = 1.0) -> EnergyDistanceUniform:
    return EnergyDistanceUniform(a, b)


def mmd_objective(kernel, nu: SparseMeasure) -> MMDObjective:
    return MMDObjective(kernel, nu)


def w2_objective(nu: SparseMeasure) -> W2Objective:
    return W2Objective(nu)


def tensor_objective(basis) -> TensorObjective:
    return TensorObjective(basis)


def circle_net_objective(target: CircleNetTarget) -> CircleNetObjective:
    return CircleNetObjective(target)


def quadratic_well(center) -> QuadraticWell:
    return QuadraticWell(center)
