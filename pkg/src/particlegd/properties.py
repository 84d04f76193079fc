"""Seeded property suites over the objectives, transport and optimizer.

Each property returns a ``PropertyResult``. ``run_suite`` executes all of
them, catching exceptions per property so one broken check never hides the
others. Negative controls pass when the checker under test detects the
planted defect; with ``planted=True`` the planted objectives are also run
as if they were real, and must show up as failures.
"""

from __future__ import annotations

import itertools
import math
import traceback
from dataclasses import dataclass, field

import numpy as np

from . import analysis as an
from .measure import SparseMeasure
from .objectives import (
    CircleNetObjective,
    CircleNetTarget,
    EnergyDistanceDiscrete,
    EnergyDistanceUniform,
    EnergyKernel,
    GaussianKernel,
    LaplacianKernel,
    MMDObjective,
    QuadraticWell,
    TensorObjective,
    W2Objective,
    _wrap_dist,
)
from .optim import StepSchedule, gd
from .transport import assignment_cost, optimal_plan


@dataclass
class PropertyResult:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)

    def to_dict(self):
        return an._jsonable({"name": self.name, "passed": self.passed, "detail": self.detail})


# -- generators --------------------------------------------------------------------


def _spread_1d(rng, n, scale=1.0, min_gap=1e-3, also=None):
    """n scalars whose pairwise gaps (and gaps to ``also``) are >= min_gap."""
    other = np.zeros(0) if also is None else np.ravel(also)
    while True:
        x = rng.normal(0.0, scale, size=n)
        pts = np.sort(np.concatenate([x, other]))
        if pts.size < 2 or np.min(np.diff(pts)) >= min_gap:
            return x


def _spread_angles(rng, n, min_gap=1e-3, also=None):
    """Angles whose wrapped gaps, and distances from antipodes, are >= min_gap."""
    other = np.zeros(0) if also is None else np.ravel(also)
    while True:
        x = rng.uniform(0.0, 2 * math.pi, size=n)
        pts = np.concatenate([x, other])
        dist = _wrap_dist(pts[:, None], pts[None, :])
        off = ~np.eye(len(pts), dtype=bool)
        if np.all(dist[off] >= min_gap) and np.all(math.pi - dist[off] >= min_gap):
            return x


def _on_sphere(rng, n, d):
    g = rng.standard_normal((n, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _orthonormal_basis(rng, d):
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return (q * np.sign(np.diag(r))).T


# -- transport -----------------------------------------------------------------------


def prop_transport_bruteforce(rng, instances=200, max_n=6):
    worst = 0.0
    mismatches = 0
    for _ in range(instances):
        n = int(rng.integers(1, max_n + 1))
        d = int(rng.integers(1, 4))
        mu = SparseMeasure(rng.normal(size=(n, d)))
        nu = SparseMeasure(rng.normal(size=(n, d)))
        w, v = mu.particles, nu.particles
        best = min(assignment_cost(w, v, p) for p in itertools.permutations(range(n)))
        got = optimal_plan(mu, nu).squared_cost
        if got != best:
            mismatches += 1
            worst = max(worst, abs(got - best))
    return PropertyResult("transport_matches_bruteforce", mismatches == 0,
                          {"instances": instances, "mismatches": mismatches,
                           "worst_abs_diff": worst})


def prop_sort_equals_solver(rng, instances=100):
    mismatches = 0
    for _ in range(instances):
        n = int(rng.integers(1, 40))
        mu = SparseMeasure(rng.normal(size=n))
        nu = SparseMeasure(rng.normal(size=n))
        a = optimal_plan(mu, nu, method="sort")
        b = optimal_plan(mu, nu, method="assignment")
        if a.squared_cost != b.squared_cost:
            mismatches += 1
    return PropertyResult("sort_path_equals_solver", mismatches == 0,
                          {"instances": instances, "mismatches": mismatches})


# -- convexity ---------------------------------------------------------------------------


def prop_jensen_energy(rng, pairs=100, max_n=16, tol=1e-9):
    worst = -math.inf
    for _ in range(pairs):
        n = int(rng.integers(1, max_n + 1))
        target = SparseMeasure(_spread_1d(rng, n))
        mu = SparseMeasure(_spread_1d(rng, n, also=target.particles))
        nu = SparseMeasure(_spread_1d(rng, n, also=target.particles))
        rep = an.check_displacement_jensen(EnergyDistanceDiscrete(target), mu, nu, 0.0, tol=tol)
        worst = max(worst, rep.max_violation)
    return PropertyResult("jensen_energy_distance", worst <= tol,
                          {"pairs": pairs, "max_violation": worst, "tol": tol})


def prop_star_w2(rng, pairs=100, tol=1e-8):
    worst = math.inf
    for _ in range(pairs):
        n = int(rng.integers(1, 9))
        d = int(rng.integers(1, 4))
        target = SparseMeasure(rng.normal(size=(n, d)))
        mu = SparseMeasure(rng.normal(size=(n, d)))
        rep = an.check_star_convexity(W2Objective(target), mu, target, tol=tol)
        worst = min(worst, rep.margin)
    return PropertyResult("star_convexity_w2", worst >= -tol,
                          {"pairs": pairs, "min_margin": worst, "tol": tol})


def prop_star_tensor(rng, measures=50, d=4, tol=1e-8, spread=None):
    """Star margin toward the basis at on-sphere measures.

    ``spread=None`` draws particles uniformly on the sphere; a number draws
    them as normalized basis vectors plus gaussian noise of that scale.
    """
    worst = math.inf
    failures = 0
    basis = _orthonormal_basis(rng, d)
    obj = TensorObjective(basis)
    for _ in range(measures):
        if spread is None:
            x = _on_sphere(rng, d, d)
        else:
            x = basis + spread * rng.standard_normal((d, d))
            x /= np.linalg.norm(x, axis=1, keepdims=True)
        rep = an.check_star_convexity(obj, SparseMeasure(x), obj.minimizer(), tol=tol)
        worst = min(worst, rep.margin)
        failures += not rep.passed
    name = "star_convexity_tensor" if spread is None else "star_convexity_tensor_near_basis"
    return PropertyResult(name, failures == 0,
                          {"measures": measures, "d": d, "failures": failures,
                           "min_margin": worst, "tol": tol, "spread": spread})


def prop_smoothness_quadratic(rng, pairs=100, n=6, d=2, tol=1e-9):
    worst = {k: math.inf for k in an.SMOOTHNESS_KEYS}
    findings = {}
    for _ in range(pairs):
        q = QuadraticWell(rng.normal(size=d))
        mu = SparseMeasure(rng.normal(size=(n, d)))
        nu = SparseMeasure(rng.normal(size=(n, d)))
        rep = an.check_smoothness_consequences(q, mu, nu, tol=tol)
        for k in worst:
            worst[k] = min(worst[k], rep.residuals[k])
        for k, v in rep.findings.items():
            if v is not None:
                findings[k] = min(findings.get(k, math.inf), v)
    ok = all(v >= -tol for v in worst.values())
    return PropertyResult("smoothness_consequences_quadratic", ok,
                          {"pairs": pairs, "min_residuals": worst,
                           "min_findings": findings, "tol": tol})


def prop_smoothness_w2(rng, pairs=100, tol=1e-8, step=0.05):
    """(i) and (iii) for W2^2(., target) on pairs sharing one optimal assignment.

    W2^2(., target) is a minimum of quadratics, so its gradient jumps where
    the optimal assignment changes; smoothness with ell = 2 only holds
    inside one assignment cell. ``nu`` is a small move of ``mu`` that is
    rejected until both map to the target through the same permutation.
    The residuals over unrestricted random pairs are reported alongside.
    """
    worst = {"i": math.inf, "iii": math.inf}
    free = {"i": math.inf, "iii": math.inf}
    for _ in range(pairs):
        n = int(rng.integers(2, 7))
        target = SparseMeasure(rng.normal(size=(n, 2)))
        obj = W2Objective(target)
        mu = SparseMeasure(rng.normal(size=(n, 2)))
        perm = optimal_plan(mu, target).permutation
        while True:
            nu = SparseMeasure(mu.particles + step * rng.normal(size=(n, 2)))
            if np.array_equal(optimal_plan(nu, target).permutation, perm):
                break
        rep = an.check_smoothness_consequences(obj, mu, nu, tol=tol)
        other = an.check_smoothness_consequences(
            obj, mu, SparseMeasure(rng.normal(size=(n, 2))), tol=tol)
        for k in worst:
            worst[k] = min(worst[k], rep.residuals[k])
            free[k] = min(free[k], other.residuals[k])
    ok = all(v >= -tol for v in worst.values())
    return PropertyResult("smoothness_consequences_w2_same_assignment", ok,
                          {"pairs": pairs, "min_residuals": worst,
                           "min_residuals_unrestricted_pairs": free, "tol": tol})


def prop_mmd_lipschitz(rng, pairs=100, tol=1e-9):
    # F(mu) = ||int Phi dmu|| for the gaussian feature map is 1-Lipschitz in MMD.
    kernel = GaussianKernel(1.0)
    worst = math.inf
    for _ in range(pairs):
        n = int(rng.integers(1, 9))
        mu = SparseMeasure(rng.normal(size=(n, 2)))
        nu = SparseMeasure(rng.normal(size=(n, 2)))
        f_mu = math.sqrt(np.mean(kernel(mu.particles, mu.particles)))
        f_nu = math.sqrt(np.mean(kernel(nu.particles, nu.particles)))
        mmd = math.sqrt(max(MMDObjective(kernel, nu).value(mu), 0.0))
        worst = min(worst, mmd - abs(f_mu - f_nu))
    return PropertyResult("mmd_lipschitz_bound", worst >= -tol,
                          {"pairs": pairs, "min_slack": worst, "tol": tol})


# -- gradients ---------------------------------------------------------------------------


def gradient_cases(rng):
    """(name, objective, measure) triples with particles away from kinks."""
    cases = []
    v = _spread_1d(rng, 6)
    cases.append(("energy_distance_discrete", EnergyDistanceDiscrete(SparseMeasure(v)),
                  SparseMeasure(_spread_1d(rng, 6, also=v))))
    cases.append(("energy_distance_uniform", EnergyDistanceUniform(-1.0, 1.0),
                  SparseMeasure(_spread_1d(rng, 6, scale=0.8))))
    nu = SparseMeasure(rng.normal(size=(4, 2)))
    for kname, kern in (("gaussian", GaussianKernel(1.0)), ("laplacian", LaplacianKernel(1.0)),
                        ("energy", EnergyKernel())):
        cases.append((f"mmd_{kname}", MMDObjective(kern, nu),
                      SparseMeasure(rng.normal(size=(4, 2)))))
    cases.append(("w2", W2Objective(SparseMeasure(rng.normal(size=(5, 2)))),
                  SparseMeasure(rng.normal(size=(5, 2)))))
    cases.append(("tensor", TensorObjective(_orthonormal_basis(rng, 4)),
                  SparseMeasure(_on_sphere(rng, 4, 4))))
    ang = np.sort(rng.uniform(0.0, math.pi, size=5))
    cases.append(("circle_net_sparse", CircleNetObjective(CircleNetTarget(angles=ang)),
                  SparseMeasure(_spread_angles(rng, 6, also=ang))))
    cases.append(("circle_net_arc", CircleNetObjective(CircleNetTarget(arc=(0.5, 2.5))),
                  SparseMeasure(_spread_angles(rng, 6))))
    cases.append(("quadratic_well", QuadraticWell(rng.normal(size=3)),
                  SparseMeasure(rng.normal(size=(5, 3)))))
    return cases


def prop_gradients(rng, rtol=1e-4, step=1e-5):
    errors = {name: an.gradient_relative_error(obj, mu, step)
              for name, obj, mu in gradient_cases(rng)}
    return PropertyResult("gradient_matches_finite_differences",
                          all(e <= rtol for e in errors.values()),
                          {"relative_errors": errors, "rtol": rtol})


def prop_permutation_invariance(rng, trials=5):
    bad = []
    for _ in range(trials):
        for name, obj, mu in gradient_cases(rng):
            perm = rng.permutation(mu.n)
            other = mu.permuted(perm)
            same_value = obj.value(mu) == obj.value(other)
            same_grad = np.array_equal(obj.gradient(mu)[perm], obj.gradient(other))
            if not (same_value and same_grad):
                bad.append(name)
    return PropertyResult("permutation_invariance", not bad,
                          {"trials": trials, "failing": sorted(set(bad))})


# -- optimizer -----------------------------------------------------------------------------


def prop_distinct_particles(rng, iters=1000, gamma=0.05):
    # gamma < 1/ell = 0.5; small enough that gaps shrink without underflowing.
    gaps = {}
    # Centered at the origin: around a nonzero center the shrinking offsets
    # drop below the center's ulp and particles merge in floating point.
    q = QuadraticWell([0.0, 0.0])
    init = SparseMeasure(rng.normal(size=(8, 2)))
    traj = gd(q, init, StepSchedule.constant(gamma), iters)
    gaps["quadratic_well"] = float(min(r.min_gap for r in traj.records))
    target = SparseMeasure(rng.normal(size=(8, 2)))
    traj = gd(W2Objective(target), init, StepSchedule.constant(gamma), iters)
    gaps["w2"] = float(min(r.min_gap for r in traj.records))
    return PropertyResult("distinct_particles_preserved", all(g > 0 for g in gaps.values()),
                          {"iters": iters, "gamma": gamma, "min_gap": gaps})


def prop_descent_and_w2_monotone(rng, iters=200, gamma=0.4, slack=1e-12):
    # gamma <= 1/ell = 0.5 for both objectives.
    q = QuadraticWell(rng.normal(size=2))
    init = SparseMeasure(rng.normal(size=(6, 2)))
    traj = gd(q, init, StepSchedule.constant(gamma), iters, reference=q.minimizer(6))
    w2_rise = float(np.max(np.diff(traj.w2sq)))
    f_rise = {"quadratic_well": float(np.max(np.diff(traj.f_values)))}
    target = SparseMeasure(rng.normal(size=(6, 2)))
    traj = gd(W2Objective(target), init, StepSchedule.constant(gamma), iters)
    f_rise["w2"] = float(np.max(np.diff(traj.f_values)))
    ok = w2_rise <= slack and all(v <= slack for v in f_rise.values())
    return PropertyResult("descent_and_w2_monotone", ok,
                          {"max_w2_increase": w2_rise, "max_f_increase": f_rise})


def prop_contraction(rng, steps=50):
    q = QuadraticWell([0.0, 0.0])
    init = SparseMeasure(rng.normal(size=(6, 2)))
    target = q.minimizer(6)
    rep = an.check_contraction(q, StepSchedule.constant(0.25), init, target, steps)
    edge = an.check_contraction(q, StepSchedule.constant(0.5), init, target, steps)
    return PropertyResult("contraction_quadratic", rep.passed and edge.passed,
                          {"max_ratio_gamma_0.25": max(rep.ratios),
                           "bound_gamma_0.25": rep.bounds[0],
                           "max_ratio_gamma_0.5": max(edge.ratios),
                           "bound_gamma_0.5": edge.bounds[0]})


def prop_schedules(rng):
    bad = []
    for k in range(1, 101):
        if StepSchedule.constant(0.3)(k) != 0.3:
            bad.append(("constant", k))
        if StepSchedule.inverse_linear(2.0)(k) != 2.0 / (2.0 * (k + 1)):
            bad.append(("inverse_linear", k))
        if StepSchedule.inverse_sqrt(400)(k) != 1.0 / math.sqrt(400):
            bad.append(("inverse_sqrt", k))
        if StepSchedule.inverse_sqrt_k()(k) != 1.0 / math.sqrt(k):
            bad.append(("inverse_sqrt_k", k))
    return PropertyResult("schedule_formulas", not bad, {"mismatches": bad})


# -- negative controls ---------------------------------------------------------------------


def prop_control_jensen(rng, pairs=20):
    """The Jensen checker must flag -quadratic_well and an overclaimed modulus."""
    caught = 0
    for _ in range(pairs):
        neg = an.NegatedObjective(QuadraticWell(rng.normal(size=2)))
        mu = SparseMeasure(rng.normal(size=(5, 2)))
        nu = SparseMeasure(rng.normal(size=(5, 2)))
        caught += not an.check_displacement_jensen(neg, mu, nu, 0.0).passed
    # Energy distance claimed 1-convex: search random pairs for a clear violation.
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 9))
        target = SparseMeasure(rng.normal(size=n))
        mu = SparseMeasure(rng.normal(size=n))
        nu = SparseMeasure(rng.normal(size=n))
        rep = an.check_displacement_jensen(EnergyDistanceDiscrete(target), mu, nu, 1.0)
        worst = max(worst, rep.max_violation)
    return PropertyResult("control_jensen_detects_nonconvexity",
                          caught == pairs and worst > 0.01,
                          {"negated_caught": caught, "pairs": pairs,
                           "overclaimed_modulus_violation": worst})


def prop_control_gradient(rng, rtol=1e-4):
    errors = {name: an.gradient_relative_error(an.PerturbedGradient(obj), mu, 1e-5)
              for name, obj, mu in gradient_cases(rng)}
    return PropertyResult("control_fd_detects_wrong_gradient",
                          all(e > rtol for e in errors.values()),
                          {"relative_errors": errors, "rtol": rtol})


# -- planted defects, run as if genuine ----------------------------------------------------


def planted_jensen(rng, pairs=20):
    worst = -math.inf
    for _ in range(pairs):
        neg = an.NegatedObjective(QuadraticWell(rng.normal(size=2)))
        mu = SparseMeasure(rng.normal(size=(5, 2)))
        nu = SparseMeasure(rng.normal(size=(5, 2)))
        worst = max(worst, an.check_displacement_jensen(neg, mu, nu, 0.0).max_violation)
    return PropertyResult("planted_jensen_negated_quadratic", worst <= an.DEFAULT_TOL,
                          {"max_violation": worst})


def planted_gradient(rng, rtol=1e-4):
    q = QuadraticWell(rng.normal(size=2))
    err = an.gradient_relative_error(an.PerturbedGradient(q), SparseMeasure(rng.normal(size=(5, 2))))
    return PropertyResult("planted_fd_perturbed_gradient", err <= rtol, {"relative_error": err})


PROPERTIES = (
    prop_transport_bruteforce,
    prop_sort_equals_solver,
    prop_jensen_energy,
    prop_star_w2,
    prop_star_tensor,
    prop_smoothness_quadratic,
    prop_smoothness_w2,
    prop_mmd_lipschitz,
    prop_gradients,
    prop_permutation_invariance,
    prop_distinct_particles,
    prop_descent_and_w2_monotone,
    prop_contraction,
    prop_schedules,
    prop_control_jensen,
    prop_control_gradient,
)

PLANTED = (planted_jensen, planted_gradient)


def _guarded(fn, rng):
    try:
        return fn(rng)
    except Exception as exc:  # reported, never fatal to the suite
        name = fn.__name__.removeprefix("prop_")
        return PropertyResult(name, False, {"error": repr(exc),
                                            "traceback": traceback.format_exc(limit=3)})


def run_suite(seed: int = 0, planted: bool = False, only=None) -> list:
    """Run every property with its own child stream of ``seed``.

    ``only`` restricts to function names (with or without the ``prop_``
    prefix).
    """
    fns = list(PROPERTIES) + (list(PLANTED) if planted else [])
    if only is not None:
        wanted = {s.removeprefix("prop_") for s in only}
        fns = [f for f in fns if f.__name__.removeprefix("prop_") in wanted]
    # Child streams are keyed by position in the full list so that filtering
    # does not change any property's draws.
    full = list(PROPERTIES) + list(PLANTED)
    seqs = np.random.SeedSequence(seed).spawn(len(full))
    out = []
    for fn in fns:
        rng = np.random.default_rng(seqs[full.index(fn)])
        out.append(_guarded(fn, rng))
    # The near-basis tensor check rides along with the global one.
    if any(f is prop_star_tensor for f in fns):
        rng = np.random.default_rng(seqs[full.index(prop_star_tensor)].spawn(1)[0])
        out.insert([r.name for r in out].index("star_convexity_tensor") + 1,
                   _guarded(lambda g: prop_star_tensor(g, spread=0.1), rng))
    return out
