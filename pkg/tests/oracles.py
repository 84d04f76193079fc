"""Slow, obviously-correct reference computations used only by the tests.

Nothing here imports the package's objectives or transport code.
"""

import itertools
import math

import numpy as np
from scipy.integrate import quad


def brute_force_w2(w, v):
    """(best cost, best permutation) over all n! assignments, lowest index on ties."""
    w, v = np.asarray(w, float), np.asarray(v, float)
    if w.ndim == 1:
        w, v = w[:, None], v[:, None]
    best, arg = math.inf, None
    for p in itertools.permutations(range(len(w))):
        c = sum(float(np.sum((w[i] - v[p[i]]) ** 2)) for i in range(len(w)))
        if c < best:
            best, arg = c, p
    return best, arg


def energy_discrete(w, v):
    n = len(w)
    cross = sum(abs(a - b) for a in w for b in v)
    ww = sum(abs(a - b) for a in w for b in w)
    vv = sum(abs(a - b) for a in v for b in v)
    return (2 * cross - vv - ww) / n**2


def uniform_potential_quad(x, a, b):
    pts = [x] if a < x < b else None
    return quad(lambda t: abs(x - t) / (b - a), a, b, points=pts, epsabs=1e-13)[0]


def energy_uniform_quad(w, a, b):
    n = len(w)
    pot = sum(uniform_potential_quad(x, a, b) for x in w)
    ww = sum(abs(p - q) for p in w for q in w)
    return 2.0 / n * pot - ww / n**2 - (b - a) / 3.0


def mmd_naive(kernel, w, v):
    def mean_k(A, B):
        return sum(kernel(a, b) for a in A for b in B) / (len(A) * len(B))

    return mean_k(w, w) - 2 * mean_k(w, v) + mean_k(v, v)


def gaussian_k(h):
    return lambda a, b: math.exp(-float(np.sum((np.asarray(a) - np.asarray(b)) ** 2)) / (2 * h * h))


def tensor_naive(basis, w):
    total = 0.0
    for wj in w:
        u = np.asarray(wj, float) / np.linalg.norm(wj)
        for vi in basis:
            total += float(np.dot(vi, u)) ** 3
    return -total


def central_differences(f, x, step=1e-5):
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += step
        xm[idx] -= step
        g[idx] = (f(xp) - f(xm)) / (2 * step)
    return g
