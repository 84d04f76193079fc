"""Experiment drivers behind the command line.

Every driver takes a plain config dict (already merged with its preset) and
a base seed and returns an ``ExperimentOutput``: CSV tables, a JSON summary
and a list of named checks. Nothing here touches the filesystem; see
``write_outputs``.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import itertools
import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import yaml

from .analysis import _jsonable, check_star_convexity
from .frankwolfe import GridDomain, approximation_error_sweep, write_sweep_csv
from .measure import SparseMeasure, law_from_config
from .objectives import (
    CircleNetObjective,
    CircleNetTarget,
    EnergyDistanceDiscrete,
    EnergyDistanceUniform,
    TensorObjective,
    circle_net_monte_carlo,
)
from .optim import NoiseSpec, RunConfig, StepSchedule, gd, pgd, run_batch, run_one
from .properties import run_suite

MAX_N = 10_000
MAX_ITERS = 10_000_000

EXPERIMENTS = {
    "fig1": "fig1_convergence",
    "fig2": "fig2_approximation",
    "tensor": "tensor_recovery",
    "circle-net": "circle_net",
    "verify": "verify_suite",
}


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


class ValidationError(RuntimeError):
    """A pre-run gate (closed form against Monte Carlo) failed."""

    def __init__(self, message, detail):
        super().__init__(message)
        self.detail = detail


@dataclass
class ExperimentOutput:
    summary: dict
    tables: dict = field(default_factory=dict)  # file stem -> CSV text
    checks: dict = field(default_factory=dict)  # name -> bool

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


# -- config ------------------------------------------------------------------------------


def load_preset(command: str) -> dict:
    text = resources.files("particlegd").joinpath("presets", f"{command}.yaml").read_text()
    return yaml.safe_load(text)


def merge(base: dict, override: dict, path: str = "") -> dict:
    """Recursive merge; keys absent from ``base`` are rejected."""
    out = copy.deepcopy(base)
    for key, val in (override or {}).items():
        where = f"{path}{key}"
        if key not in out:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(out[key], dict) and isinstance(val, dict):
            # Tagged unions (a dict with "kind") are replaced, not merged.
            if "kind" in val and val.get("kind") != out[key].get("kind"):
                out[key] = copy.deepcopy(val)
            else:
                out[key] = merge(out[key], val, where + ".")
        else:
            out[key] = copy.deepcopy(val)
    return out


def resolve_config(command: str, user: dict | None = None, seed: int | None = None,
                   log_every: int | None = None, sets=()) -> dict:
    """Preset, then config file, then ``--set`` pairs, then flags."""
    cfg = load_preset(command)
    user = dict(user or {})
    declared = user.pop("experiment", EXPERIMENTS[command])
    if declared != EXPERIMENTS[command]:
        raise ConfigError(f"config is for experiment {declared!r}, "
                          f"not {EXPERIMENTS[command]!r}")
    cfg = merge(cfg, user)
    for item in sets:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        node = {}
        cur = node
        parts = key.split(".")
        for p in parts[:-1]:
            cur[p] = {}
            cur = cur[p]
        cur[parts[-1]] = yaml.safe_load(raw)
        cfg = merge(cfg, node)
    if seed is not None:
        cfg["base_seed"] = int(seed)
    if log_every is not None and "log_every" in cfg:
        cfg["log_every"] = int(log_every)
    _validate(cfg)
    return cfg


def _validate(cfg):
    if not isinstance(cfg.get("base_seed"), int) or cfg["base_seed"] < 0:
        raise ConfigError("base_seed must be a non-negative integer")
    for key in ("n", "d"):
        if key in cfg and not (isinstance(cfg[key], int) and 1 <= cfg[key] <= MAX_N):
            raise ConfigError(f"{key} must be an integer in [1, {MAX_N}]")
    for key in ("iters", "pgd_iters"):
        if key in cfg and not (isinstance(cfg[key], int) and 1 <= cfg[key] <= MAX_ITERS):
            raise ConfigError(f"{key} must be an integer in [1, {MAX_ITERS}]")
    for key in ("n_runs", "log_every"):
        if key in cfg and not (isinstance(cfg[key], int) and cfg[key] >= 1):
            raise ConfigError(f"{key} must be a positive integer")
    if "n_list" in cfg:
        ns = cfg["n_list"]
        if (not ns or any(not isinstance(n, int) or not 1 <= n <= MAX_N for n in ns)
                or any(b <= a for a, b in zip(ns, ns[1:]))):
            raise ConfigError("n_list must be a strictly ascending list of integers in range")
    try:
        if "schedule" in cfg:
            StepSchedule.from_config(cfg["schedule"])
        if "noise" in cfg:
            NoiseSpec.from_config(cfg["noise"])
        if isinstance(cfg.get("init"), dict):
            law_from_config(cfg["init"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _comment(cfg):
    return f"config_sha256={config_hash(cfg)} base_seed={cfg['base_seed']}"


def _csv(rows, header, cfg) -> str:
    buf = io.StringIO()
    buf.write(f"# {_comment(cfg)}\n")
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def loglog_slope(x, y) -> float:
    """OLS slope of log y against log x."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.size < 2 or np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("slope fit needs at least two points with positive coordinates")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


# -- fig1: convergence of PGD on the discrete energy distance -------------------------


def _fig1_problem(cfg):
    n = cfg["n"]
    target_law = law_from_config(cfg["target"])
    init_law = law_from_config(cfg["init"])
    shared = None
    if cfg["shared_target"]:
        shared = SparseMeasure(target_law.sample(
            np.random.default_rng([cfg["base_seed"], 1]), n, 1))

    def problem(rng):
        target = shared if shared is not None else SparseMeasure(target_law.sample(rng, n, 1))
        init = SparseMeasure(init_law.sample(rng, n, 1))
        return EnergyDistanceDiscrete(target), init, None

    return problem


def run_fig1(cfg) -> ExperimentOutput:
    problem = _fig1_problem(cfg)
    run_cfg = RunConfig(problem, StepSchedule.from_config(cfg["schedule"]), cfg["iters"],
                        NoiseSpec.from_config(cfg["noise"]), cfg["log_every"],
                        record_min_gap=False)
    batch = run_batch(run_cfg, cfg["n_runs"], cfg["base_seed"])
    method = cfg["optimum"]["method"]
    if method == "exact":
        # The target itself is an n-sparse measure with E = 0.
        optimum = np.zeros(cfg["n_runs"])
    elif method == "extended_horizon":
        long_cfg = RunConfig(problem, run_cfg.schedule, cfg["iters"] * cfg["optimum"]["factor"],
                             run_cfg.noise, cfg["log_every"], record_min_gap=False)
        best = np.array([float(np.min(run_one(long_cfg, cfg["base_seed"] + r).f_values))
                         for r in range(cfg["n_runs"])])
        optimum = np.full_like(best, best.min()) if cfg["shared_target"] else best
    else:
        raise ConfigError(f"unknown optimum method {method!r}")
    curves = np.stack([t.f_values for t in batch.trajectories]) - optimum[:, None]
    subopt = curves[0].copy()
    for c in curves[1:]:
        subopt += c
    subopt /= cfg["n_runs"]
    ks = batch.ks
    lo = cfg["iters"] / 10.0
    sel = (ks >= max(lo, 1)) & (subopt > 0)
    slope = loglog_slope(ks[sel], subopt[sel])
    lo_s, hi_s = cfg["slope_range"]
    summary = {
        "experiment": "fig1_convergence",
        "fitted_slope": slope,
        "fit_window": [int(ks[sel][0]), int(ks[sel][-1])],
        "fit_points": int(sel.sum()),
        "theory_slope": -0.5,
        "optimum_method": method,
        "optimum_values": optimum.tolist(),
        "initial_mean_suboptimality": float(subopt[0]),
        "final_mean_suboptimality": float(subopt[-1]),
    }
    table = _csv(zip(ks, batch.mean_f, subopt), ["k", "mean_f_value", "mean_suboptimality"], cfg)
    return ExperimentOutput(summary, {"fig1": table},
                            {"slope_in_range": lo_s <= slope <= hi_s})


# -- fig2: approximation error against n ---------------------------------------------------


def run_fig2(cfg) -> ExperimentOutput:
    a, b = cfg["target"]["a"], cfg["target"]["b"]
    obj = EnergyDistanceUniform(a, b)
    domain = GridDomain(a, b, cfg["grid_resolution"])
    rows = approximation_error_sweep(obj, domain, cfg["n_list"], pgd_iters=cfg["pgd_iters"],
                                     noise=NoiseSpec.from_config(cfg["noise"]),
                                     seed=cfg["base_seed"], log_every=cfg["log_every"])
    ns = [r.n for r in rows]
    errs = [r.error for r in rows]
    slope = loglog_slope(ns, errs)
    buf = io.StringIO()
    write_sweep_csv(rows, buf, _comment(cfg))
    monotone = all(e2 <= e1 for e1, e2 in zip(errs, errs[1:]))
    summary = {
        "experiment": "fig2_approximation",
        "fitted_slope": slope,
        "n": ns,
        "error": errs,
        "error_fw": [r.error_fw for r in rows],
        "pgd_iters": cfg["pgd_iters"],
    }
    return ExperimentOutput(summary, {"fig2": buf.getvalue()},
                            {"slope_below_threshold": slope <= cfg["slope_max"],
                             "error_non_increasing": monotone})


# -- tensor recovery -------------------------------------------------------------------------


def random_orthonormal_basis(rng, d) -> np.ndarray:
    """Rows of Q from the QR factorization of a gaussian matrix (sign-fixed)."""
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return (q * np.sign(np.diag(r))).T


def basis_distance(particles, basis) -> float:
    """min over permutations and signs of the largest particle-to-vector distance."""
    n = particles.shape[0]
    best = math.inf
    for perm in itertools.permutations(range(basis.shape[0]), n):
        worst = 0.0
        for j, i in enumerate(perm):
            v = basis[i]
            worst = max(worst, min(np.linalg.norm(particles[j] - v),
                                   np.linalg.norm(particles[j] + v)))
        best = min(best, worst)
    return float(best)


def run_tensor(cfg) -> ExperimentOutput:
    d = cfg["d"]
    if not 3 <= d <= 8:
        raise ConfigError("tensor experiment needs d in [3, 8]")
    n = d
    rows = []
    margins = []
    for r in range(cfg["n_runs"]):
        seed = cfg["base_seed"] + r
        rng = np.random.default_rng(seed)
        basis = random_orthonormal_basis(rng, d)
        obj = TensorObjective(basis)
        if cfg["init"] == "basis":
            init = obj.minimizer()
        else:
            init = SparseMeasure(law_from_config("uniform_sphere").sample(rng, n, d))
        traj = gd(obj, init, StepSchedule.from_config(cfg["schedule"]), cfg["iters"],
                  log_every=cfg["log_every"], sphere_projection=cfg["sphere_projection"],
                  record_min_gap=False)
        final = traj.final_measure
        g = obj.value(final)
        dist = basis_distance(final.particles, basis)
        ok = g <= -d + cfg["success"]["g_tol"] and dist <= cfg["success"]["distance"]
        margin = check_star_convexity(obj, final, obj.minimizer()).margin
        if ok:
            margins.append(margin)
        rows.append((r, seed, g, dist, margin, int(ok)))
    rate = float(np.mean([row[-1] for row in rows]))
    summary = {
        "experiment": "tensor_recovery",
        "d": d,
        "success_rate": rate,
        "final_G": [row[2] for row in rows],
        "distance_to_basis": [row[3] for row in rows],
        "star_margin_final": [row[4] for row in rows],
    }
    checks = {"success_rate_floor": rate >= cfg["success_rate_floor"],
              "successful_runs_star_margin": all(m >= -1e-8 for m in margins)}
    table = _csv(rows, ["run", "seed", "final_G", "distance_to_basis", "star_margin", "success"],
                 cfg)
    return ExperimentOutput(summary, {"tensor": table}, checks)


# -- neurons on the circle -------------------------------------------------------------------


def _circle_target(cfg):
    t = cfg["target"]
    if t["kind"] == "arc":
        return CircleNetTarget(arc=(t["a"], t["b"]))
    if t["kind"] == "angles":
        return CircleNetTarget(angles=tuple(t["angles"]))
    raise ConfigError(f"unknown circle target kind {t['kind']!r}")


def run_circle_net(cfg) -> ExperimentOutput:
    try:
        target = _circle_target(cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    obj = CircleNetObjective(target)
    problem_seq, noise_seq, mc_seq = np.random.SeedSequence(cfg["base_seed"]).spawn(3)
    if cfg["init"] == "target":
        if target.angles is None or len(target.angles) != cfg["n"]:
            raise ConfigError("init=target needs a sparse target with n angles")
        init = SparseMeasure(np.array(target.angles))
    else:
        init = SparseMeasure(np.random.default_rng(problem_seq).uniform(0, 2 * math.pi, cfg["n"]))
    closed = obj.value(init)
    mc, se = circle_net_monte_carlo(obj, init, cfg["validation"]["samples"],
                                    seed=np.random.default_rng(mc_seq))
    gate = cfg["validation"]["sigmas"] * se + 1e-12
    detail = {"closed_form": closed, "monte_carlo": mc, "standard_error": se,
              "allowed": gate}
    if abs(closed - mc) > gate:
        raise ValidationError("closed-form loss disagrees with Monte Carlo", detail)
    traj = pgd(obj, init, StepSchedule.from_config(cfg["schedule"]),
               NoiseSpec.from_config(cfg["noise"]), cfg["iters"],
               seed=np.random.default_rng(noise_seq), log_every=cfg["log_every"],
               record_min_gap=False)
    f = traj.f_values
    run_min = np.minimum.accumulate(f)
    initial, final = float(f[0]), float(f[-1])
    reduction = math.inf if final == 0 else initial / final
    summary = {
        "experiment": "circle_net",
        "validation": detail,
        "initial_L": initial,
        "final_L": final,
        "min_L": float(run_min[-1]),
        "reduction_factor": reduction,
    }
    table = _csv(zip(traj.ks, f, run_min), ["k", "L_value", "running_min_L"], cfg)
    checks = {"monte_carlo_agreement": True}
    if cfg["init"] != "target":
        checks["reduction_at_least"] = reduction >= cfg["reduction_min"]
    return ExperimentOutput(summary, {"circle_net": table}, checks)


# -- verify ------------------------------------------------------------------------------------


def run_verify(cfg) -> ExperimentOutput:
    results = run_suite(cfg["base_seed"], planted=cfg["planted"], only=cfg["only"])
    props = [r.to_dict() for r in results]
    for p in props:
        p["detail"].pop("traceback", None)
    summary = {
        "experiment": "verify_suite",
        "planted": cfg["planted"],
        "all_passed": all(r.passed for r in results),
        "properties": props,
    }
    return ExperimentOutput(summary, {}, {r.name: r.passed for r in results})


RUNNERS = {
    "fig1": run_fig1,
    "fig2": run_fig2,
    "tensor": run_tensor,
    "circle-net": run_circle_net,
    "verify": run_verify,
}


def summary_json(cfg, out: ExperimentOutput) -> str:
    doc = {"config": cfg, "config_sha256": config_hash(cfg), "base_seed": cfg["base_seed"],
           "checks": out.checks, "passed": out.passed, **out.summary}
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"
