"""Particle gradient descent and its perturbed variant.

Both run the recursion

    w_i <- w_i - gamma_k (dF/dw_i(mu) + s * xi_i)

where ``xi_i`` is drawn from the noise law and ``s`` is ``1/sqrt(n)`` or 1
depending on ``NoiseSpec.scale_by_inv_sqrt_n``. Step ``k`` (counted from 1)
uses ``gamma_k``; record ``k`` describes the measure after ``k`` steps.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .measure import SparseMeasure, min_pairwise_distance
from .objectives import Objective
from .transport import w2_squared

DIVERGENCE_FACTOR = 1e6
COORDINATE_LIMIT = 1e12


@dataclass(frozen=True)
class StepSchedule:
    """Stepsize rule.

    kind
        ``constant`` (gamma), ``inverse_linear`` (2 / (lam (k+1))),
        ``inverse_sqrt`` (1 / sqrt(m) for every step) or ``inverse_sqrt_k``
        (1 / sqrt(k)).
    """

    kind: str
    gamma: float | None = None
    lam: float | None = None
    m: int | None = None

    def __post_init__(self):
        if self.kind == "constant":
            if self.gamma is None or not self.gamma > 0:
                raise ValueError("constant schedule needs gamma > 0")
        elif self.kind == "inverse_linear":
            if self.lam is None or not self.lam > 0:
                raise ValueError("inverse_linear schedule needs lam > 0")
        elif self.kind == "inverse_sqrt":
            if self.m is None or self.m < 1:
                raise ValueError("inverse_sqrt schedule needs m >= 1")
        elif self.kind != "inverse_sqrt_k":
            raise ValueError(f"unknown schedule kind {self.kind!r}")

    @classmethod
    def constant(cls, gamma):
        return cls("constant", gamma=gamma)

    @classmethod
    def inverse_linear(cls, lam):
        return cls("inverse_linear", lam=lam)

    @classmethod
    def inverse_sqrt(cls, m):
        return cls("inverse_sqrt", m=m)

    @classmethod
    def inverse_sqrt_k(cls):
        return cls("inverse_sqrt_k")

    def __call__(self, k: int) -> float:
        if k < 1:
            raise ValueError(f"steps are counted from 1, got k={k}")
        if self.kind == "constant":
            return float(self.gamma)
        if self.kind == "inverse_linear":
            return 2.0 / (self.lam * (k + 1))
        if self.kind == "inverse_sqrt":
            return 1.0 / math.sqrt(self.m)
        return 1.0 / math.sqrt(k)

    @classmethod
    def from_config(cls, cfg: dict) -> "StepSchedule":
        return cls(**cfg)


@dataclass(frozen=True)
class NoiseSpec:
    """Perturbation law for PGD.

    ``uniform_ball`` draws uniformly from the radius-r ball in R^d,
    ``uniform_box`` i.i.d. coordinates from [-r, r].
    """

    kind: str = "none"
    radius: float = 1.0
    scale_by_inv_sqrt_n: bool = True

    def __post_init__(self):
        if self.kind not in ("none", "uniform_ball", "uniform_box"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind != "none" and not self.radius > 0:
            raise ValueError("noise radius must be > 0")

    @classmethod
    def from_config(cls, cfg: dict) -> "NoiseSpec":
        return cls(**cfg)

    def sample(self, rng: np.random.Generator, n: int, d: int) -> np.ndarray:
        if self.kind == "uniform_box":
            xi = rng.uniform(-self.radius, self.radius, size=(n, d))
        elif self.kind == "uniform_ball":
            g = rng.standard_normal(size=(n, d))
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            xi = g * (self.radius * rng.uniform(size=(n, 1)) ** (1.0 / d))
        else:
            return np.zeros((n, d))
        if self.scale_by_inv_sqrt_n:
            xi /= math.sqrt(n)
        return xi


@dataclass(frozen=True)
class Record:
    k: int
    f_value: float
    w2sq_to_target: float | None
    grad_norm_sq: float
    min_gap: float


@dataclass
class Trajectory:
    records: list = field(default_factory=list)
    final_measure: SparseMeasure | None = None
    seed: int | None = None

    COLUMNS = ("k", "f_value", "w2sq_to_target", "grad_norm_sq", "min_gap")

    @property
    def ks(self) -> np.ndarray:
        return np.array([r.k for r in self.records])

    @property
    def f_values(self) -> np.ndarray:
        return np.array([r.f_value for r in self.records])

    @property
    def w2sq(self) -> np.ndarray:
        return np.array([np.nan if r.w2sq_to_target is None else r.w2sq_to_target
                         for r in self.records])

    def write_csv(self, fh, comment: str | None = None) -> None:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh, lineterminator="\r\n")
        writer.writerow(self.COLUMNS)
        for r in self.records:
            writer.writerow([r.k, repr(r.f_value),
                             "" if r.w2sq_to_target is None else repr(r.w2sq_to_target),
                             repr(r.grad_norm_sq), repr(r.min_gap)])

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "records": [asdict(r) for r in self.records],
            "final_measure": None if self.final_measure is None
            else self.final_measure.particles.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


class OptimizationError(RuntimeError):
    """Raised on non-finite iterates or divergence; carries the partial trajectory."""

    def __init__(self, message, trajectory: Trajectory, k: int):
        super().__init__(f"{message} at step {k}")
        self.trajectory = trajectory
        self.k = k


def _project_to_sphere(w):
    r = np.linalg.norm(w, axis=1, keepdims=True)
    return w / r


def pgd(objective: Objective, init: SparseMeasure, schedule: StepSchedule,
        noise: NoiseSpec, iters: int, seed=None, *, log_every: int = 1,
        sphere_projection: bool = False, reference: SparseMeasure | None = None,
        record_min_gap: bool = True) -> Trajectory:
    """Perturbed particle gradient descent.

    Parameters
    ----------
    objective : Objective
    init : SparseMeasure
        Starting particles.
    schedule : StepSchedule
    noise : NoiseSpec
        ``NoiseSpec()`` (kind ``none``) reduces this to plain gradient descent.
    iters : int
        Number of steps.
    seed : int or numpy.random.Generator, optional
        Noise stream.
    log_every : int
        Record every ``log_every``-th iterate; the first and last are always
        recorded.
    sphere_projection : bool
        Renormalize every particle to unit norm after each step.
    reference : SparseMeasure, optional
        Log ``W2^2(mu_k, reference)`` when given.

    Returns
    -------
    Trajectory
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if log_every < 1:
        raise ValueError("log_every must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    traj = Trajectory(seed=seed if isinstance(seed, (int, np.integer)) else None)
    n, d = init.n, init.d
    w = np.array(init.particles)
    mu = init
    f0 = None
    for k in range(iters + 1):
        g = objective.gradient(mu)
        if not np.all(np.isfinite(g)):
            traj.final_measure = mu
            raise OptimizationError("non-finite gradient", traj, k)
        if k % log_every == 0 or k == iters:
            f = objective.value(mu)
            if not math.isfinite(f):
                traj.final_measure = mu
                raise OptimizationError("non-finite objective value", traj, k)
            if f0 is None:
                f0 = f
            traj.records.append(Record(
                k=k,
                f_value=f,
                w2sq_to_target=None if reference is None else w2_squared(mu, reference),
                grad_norm_sq=float(np.sum(g * g)),
                min_gap=min_pairwise_distance(mu) if record_min_gap else float("nan"),
            ))
            if f > DIVERGENCE_FACTOR * max(abs(f0), 1.0):
                traj.final_measure = mu
                raise OptimizationError("objective diverged", traj, k)
        if k == iters:
            break
        step = schedule(k + 1)
        if noise.kind == "none":
            w = w - step * g
        else:
            w = w - step * (g + noise.sample(rng, n, d))
        if sphere_projection:
            w = _project_to_sphere(w)
        if not np.all(np.isfinite(w)) or np.max(np.abs(w)) > COORDINATE_LIMIT:
            traj.final_measure = mu
            raise OptimizationError("particles left the finite range", traj, k + 1)
        mu = SparseMeasure._trusted(w)
    traj.final_measure = mu
    return traj


def gd(objective: Objective, init: SparseMeasure, schedule: StepSchedule, iters: int,
       **options) -> Trajectory:
    """Particle gradient descent ``w_i <- w_i - gamma_k dF/dw_i``."""
    return pgd(objective, init, schedule, NoiseSpec(), iters, seed=None, **options)


# -- batches ---------------------------------------------------------------------


@dataclass
class RunConfig:
    """One (P)GD experiment, instantiated per seed.

    ``problem`` maps a ``numpy.random.Generator`` to ``(objective, init,
    reference)``; ``reference`` may be None.
    """

    problem: Callable
    schedule: StepSchedule
    iters: int
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    log_every: int = 1
    sphere_projection: bool = False
    record_min_gap: bool = True


@dataclass
class BatchResult:
    trajectories: list
    ks: np.ndarray
    mean_f: np.ndarray


def run_one(config: RunConfig, seed: int) -> Trajectory:
    problem_seq, noise_seq = np.random.SeedSequence(seed).spawn(2)
    objective, init, reference = config.problem(np.random.default_rng(problem_seq))
    traj = pgd(objective, init, config.schedule, config.noise, config.iters,
               seed=np.random.default_rng(noise_seq), log_every=config.log_every,
               sphere_projection=config.sphere_projection, reference=reference,
               record_min_gap=config.record_min_gap)
    traj.seed = seed
    return traj


def run_batch(config: RunConfig, n_runs: int, base_seed: int = 0) -> BatchResult:
    """Run seeds ``base_seed .. base_seed + n_runs - 1`` and average f curves."""
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    trajs = [run_one(config, base_seed + r) for r in range(n_runs)]
    ks = trajs[0].ks
    curves = np.stack([t.f_values for t in trajs])
    # Reduce in seed order so the mean is reproducible bit for bit.
    mean = curves[0].copy()
    for c in curves[1:]:
        mean += c
    mean /= n_runs
    return BatchResult(trajs, ks, mean)
