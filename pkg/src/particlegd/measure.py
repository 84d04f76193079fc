"""Uniformly weighted sparse measures (1/n) sum_i delta_{w_i} over R^d."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist


class SparseMeasure:
    """Immutable n-particle measure with uniform weights 1/n.

    Particles are stored as a read-only ``(n, d)`` float64 array. Order is
    kept as given, although every objective treats it as irrelevant.

    Parameters
    ----------
    particles : array-like, shape (n, d) or (n,)
        Particle locations. A one-dimensional input is read as n scalar
        particles (d = 1).
    """

    __slots__ = ("_particles",)

    def __init__(self, particles):
        arr = np.array(particles, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2:
            raise ValueError(
                "particles must be a list of equal-length vectors, "
                f"got array of shape {arr.shape}"
            )
        if arr.shape[0] < 1:
            raise ValueError("a sparse measure needs at least one particle")
        if arr.shape[1] < 1:
            raise ValueError("particle dimension must be at least 1")
        if not np.all(np.isfinite(arr)):
            raise ValueError("particles must have finite entries")
        arr.setflags(write=False)
        self._particles = arr

    @classmethod
    def _trusted(cls, arr: np.ndarray) -> "SparseMeasure":
        # Skips validation; caller guarantees a finite (n, d) float64 array.
        obj = cls.__new__(cls)
        arr = np.array(arr, dtype=np.float64)
        arr.setflags(write=False)
        obj._particles = arr
        return obj

    @property
    def particles(self) -> np.ndarray:
        return self._particles

    @property
    def n(self) -> int:
        return self._particles.shape[0]

    @property
    def d(self) -> int:
        return self._particles.shape[1]

    def __len__(self):
        return self.n

    def __repr__(self):
        return f"SparseMeasure(n={self.n}, d={self.d})"

    def __eq__(self, other):
        if not isinstance(other, SparseMeasure):
            return NotImplemented
        return np.array_equal(self._particles, other._particles)

    __hash__ = None

    def permuted(self, perm) -> "SparseMeasure":
        """Same measure with particles listed in the order ``perm``."""
        return SparseMeasure._trusted(self._particles[np.asarray(perm)])

    # -- serialization -----------------------------------------------------

    def to_json(self) -> str:
        return json.dumps(self._particles.tolist())

    @classmethod
    def from_json(cls, text: str) -> "SparseMeasure":
        return cls(json.loads(text))

    def save(self, path) -> None:
        """Write to ``path``; ``.json`` gives an array of arrays, else CSV."""
        path = Path(path)
        if path.suffix == ".json":
            path.write_text(self.to_json() + "\n")
        else:
            np.savetxt(path, self._particles, delimiter=",", fmt="%.17g")

    @classmethod
    def load(cls, path) -> "SparseMeasure":
        path = Path(path)
        if path.suffix == ".json":
            return cls.from_json(path.read_text())
        arr = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
        return cls(arr)


# -- initialization laws -----------------------------------------------------


@dataclass(frozen=True)
class UniformBox:
    a: float = 0.0
    b: float = 1.0

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"uniform_box needs a < b, got a={self.a}, b={self.b}")

    def sample(self, rng, n, d):
        return rng.uniform(self.a, self.b, size=(n, d))


@dataclass(frozen=True)
class Gaussian:
    mean: float = 0.0
    std: float = 1.0

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError(f"gaussian needs std > 0, got {self.std}")

    def sample(self, rng, n, d):
        return self.mean + self.std * rng.standard_normal(size=(n, d))


@dataclass(frozen=True)
class UniformSphere:
    def sample(self, rng, n, d):
        x = rng.standard_normal(size=(n, d))
        return x / np.linalg.norm(x, axis=1, keepdims=True)


def law_from_config(cfg) -> UniformBox | Gaussian | UniformSphere:
    """Build a law from ``{"kind": ..., **params}`` or a bare kind string."""
    if isinstance(cfg, str):
        cfg = {"kind": cfg}
    cfg = dict(cfg)
    kind = cfg.pop("kind")
    laws = {
        "uniform_box": UniformBox,
        "gaussian": Gaussian,
        "uniform_sphere": UniformSphere,
    }
    if kind not in laws:
        raise ValueError(f"unknown law {kind!r}; expected one of {sorted(laws)}")
    return laws[kind](**cfg)


def random_init(n: int, d: int, law, seed) -> SparseMeasure:
    """Draw n i.i.d. particles in R^d from ``law``.

    ``seed`` may be an int or a ``numpy.random.Generator``. Distinctness of
    the draw is checked afterwards and a duplicate raises ``RuntimeError``.
    """
    if n < 1 or d < 1:
        raise ValueError(f"need n, d >= 1, got n={n}, d={d}")
    if isinstance(law, (str, dict)):
        law = law_from_config(law)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    m = SparseMeasure(law.sample(rng, n, d))
    if min_pairwise_distance(m) == 0.0:
        raise RuntimeError("random_init produced duplicate particles")
    return m


def min_pairwise_distance(m: SparseMeasure) -> float:
    """Smallest Euclidean distance between two particles (inf when n == 1)."""
    x = m.particles
    if x.shape[0] < 2:
        return float("inf")
    if x.shape[1] == 1:
        return float(np.min(np.diff(np.sort(x[:, 0]))))
    return float(np.min(pdist(x)))
