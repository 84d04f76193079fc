import io
import math

import numpy as np
import pytest
from oracles import energy_uniform_quad

from particlegd.experiments import loglog_slope
from particlegd.frankwolfe import (
    GridDomain,
    approximation_error_sweep,
    frank_wolfe,
    write_sweep_csv,
)
from particlegd.measure import SparseMeasure
from particlegd.objectives import energy_distance_discrete, energy_distance_uniform

UNIFORM = energy_distance_uniform(-1.0, 1.0)


def midpoints(n):
    return -1.0 + 2.0 * (np.arange(n) + 0.5) / n


def test_single_step_support():
    res = frank_wolfe(UNIFORM, GridDomain(), 1)
    assert len(res.atoms) <= 2
    assert math.isclose(res.weights.sum(), 1.0, rel_tol=1e-15)


def test_best_single_atom_error_is_one_third():
    # 2 E|0 - Y| - E|Y - Y'| = 1 - 2/3 for Y uniform on [-1, 1]
    res = frank_wolfe(UNIFORM, GridDomain(resolution=4097), 1)
    assert res.values[0] == pytest.approx(1.0 / 3.0, abs=1e-15)
    assert energy_uniform_quad([0.0], -1.0, 1.0) == pytest.approx(1.0 / 3.0, abs=1e-8)
    # even-resolution grid misses 0 by half a cell, which costs O(h^2)
    even = frank_wolfe(UNIFORM, GridDomain(resolution=4096), 1)
    assert even.values[0] - 1.0 / 3.0 < 1e-6


def test_values_non_increasing_with_line_search():
    res = frank_wolfe(UNIFORM, GridDomain(), 64)
    assert np.all(np.diff(res.values) <= 1e-10)


def test_sublinear_rate_anchored_at_eight():
    vals = frank_wolfe(UNIFORM, GridDomain(), 63).values
    c = vals[7] * 8
    for k in (16, 32, 64):
        assert vals[k - 1] <= c / k


def test_open_loop_also_converges():
    res = frank_wolfe(UNIFORM, GridDomain(), 64, step="open_loop")
    assert res.value < 1e-3


def test_dirac_target_goes_to_nearest_grid_point():
    # grid on [-1, 1] with spacing 0.2; 0.33 is nearest to 0.4
    obj = energy_distance_discrete(SparseMeasure([0.33]))
    res = frank_wolfe(obj, GridDomain(resolution=11), 5)
    assert res.atoms[0] == pytest.approx(0.4, abs=1e-12)
    assert res.values[0] == pytest.approx(2 * 0.07, abs=1e-12)
    # spreading mass over other grid points lowers it further, but the
    # nearest point keeps the largest weight
    assert res.value < res.values[0]
    assert res.atoms[np.argmax(res.weights)] == res.atoms[0]


def test_grid_refinement_is_stable():
    coarse = frank_wolfe(UNIFORM, GridDomain(resolution=4096), 63).value
    fine = frank_wolfe(UNIFORM, GridDomain(resolution=8192), 63).value
    assert abs(fine - coarse) <= 0.01 * coarse


def test_uniform_rounding_spreads_heavy_atoms():
    res = frank_wolfe(UNIFORM, GridDomain(), 7)
    parts = res.uniform_rounding(8).particles[:, 0]
    assert len(np.unique(parts)) == 8
    assert np.all(np.diff(parts) > 0)


def test_midpoint_quantile_error_closed_form():
    for n in (1, 4, 9):
        exact = 1.0 / (3.0 * n * n)
        assert UNIFORM.value(SparseMeasure(midpoints(n))) == pytest.approx(exact, rel=1e-12)
        assert energy_uniform_quad(midpoints(n), -1.0, 1.0) == pytest.approx(exact, abs=1e-8)


def test_reduced_sweep():
    ns = [4, 8, 16, 32]
    rows = approximation_error_sweep(UNIFORM, GridDomain(), ns, pgd_iters=2000, seed=0)
    errs = [r.error for r in rows]
    assert all(b <= a for a, b in zip(errs, errs[1:]))
    assert loglog_slope(ns, errs) <= -0.9
    for r in rows:
        # no n-particle measure beats the midpoint quantiles
        assert r.error >= 1.0 / (3.0 * r.n**2) - 1e-12
        assert r.error == min(r.error_fw_uniform, r.error_pgd_polished)


def test_sweep_is_deterministic_and_csv():
    a = approximation_error_sweep(UNIFORM, GridDomain(), [2, 4], pgd_iters=200, seed=3)
    b = approximation_error_sweep(UNIFORM, GridDomain(), [2, 4], pgd_iters=200, seed=3)
    assert a == b
    buf = io.StringIO()
    write_sweep_csv(a, buf, comment="x")
    lines = buf.getvalue().split("\r\n")
    assert lines[0] == "# x\nn,error,error_fw,error_fw_uniform,error_pgd_polished"
    assert lines[1].startswith("2,")


def test_validation():
    with pytest.raises(ValueError):
        frank_wolfe(UNIFORM, GridDomain(), 0)
    with pytest.raises(ValueError):
        frank_wolfe(UNIFORM, GridDomain(), 2, step="bogus")
    with pytest.raises(ValueError):
        GridDomain(1.0, 1.0)
    with pytest.raises(ValueError):
        GridDomain(resolution=1)
    with pytest.raises(ValueError):
        approximation_error_sweep(UNIFORM, GridDomain(), [8, 4])
