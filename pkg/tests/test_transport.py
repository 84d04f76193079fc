import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import brute_force_w2

from particlegd.measure import SparseMeasure
from particlegd.transport import displacement_interpolate, optimal_plan, w2_squared

coord = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


@st.composite
def pairs(draw, max_n=6, max_d=3):
    n = draw(st.integers(1, max_n))
    d = draw(st.integers(1, max_d))
    mk = st.lists(st.lists(coord, min_size=d, max_size=d), min_size=n, max_size=n)
    return SparseMeasure(draw(mk)), SparseMeasure(draw(mk))


def test_same_support_swapped():
    plan = optimal_plan(SparseMeasure([[0], [1]]), SparseMeasure([[1], [0]]))
    assert plan.permutation.tolist() == [1, 0]
    assert plan.squared_cost == 0.0


def test_shifted_pair():
    # brute force over both permutations gives 2.0 with the identity
    plan = optimal_plan(SparseMeasure([[0], [10]]), SparseMeasure([[1], [11]]))
    assert plan.permutation.tolist() == [0, 1]
    assert plan.squared_cost == 2.0


def test_frozen_2d_instance():
    # exhaustive oracle value
    w = [[0, 0], [1, 2], [3, 1]]
    v = [[2, 2], [0, 1], [3, 0]]
    assert w2_squared(SparseMeasure(w), SparseMeasure(v)) == 3.0
    assert brute_force_w2(w, v)[0] == 3.0


def test_random_n6_d3_matches_720_permutations():
    rng = np.random.default_rng(11)
    w, v = rng.normal(size=(6, 3)), rng.normal(size=(6, 3))
    best, _ = brute_force_w2(w, v)
    assert math.isclose(w2_squared(SparseMeasure(w), SparseMeasure(v)), best, rel_tol=1e-12)


@given(pairs())
def test_plan_is_bijection_with_recomputed_cost(pair):
    mu, nu = pair
    plan = optimal_plan(mu, nu)
    assert sorted(plan.permutation.tolist()) == list(range(mu.n))
    cost = float(np.sum((mu.particles - plan.target_of(nu)) ** 2))
    assert math.isclose(plan.squared_cost, cost, rel_tol=1e-10, abs_tol=1e-12)


@given(pairs())
def test_brute_force_equivalence(pair):
    mu, nu = pair
    best, _ = brute_force_w2(mu.particles, nu.particles)
    assert math.isclose(w2_squared(mu, nu), best, rel_tol=1e-10, abs_tol=1e-9)


@given(pairs(max_n=6))
def test_symmetry_and_identity(pair):
    mu, nu = pair
    assert math.isclose(w2_squared(mu, nu), w2_squared(nu, mu), rel_tol=1e-10, abs_tol=1e-9)
    assert w2_squared(mu, mu) == 0.0
    assert w2_squared(mu, mu.permuted(np.arange(mu.n)[::-1])) == 0.0


@given(pairs(max_n=5), st.data())
def test_triangle_inequality(pair, data):
    mu, nu = pair
    rho = SparseMeasure(data.draw(st.lists(st.lists(coord, min_size=mu.d, max_size=mu.d),
                                           min_size=mu.n, max_size=mu.n)))
    d = lambda a, b: math.sqrt(w2_squared(a, b))  # noqa: E731
    assert d(mu, rho) <= d(mu, nu) + d(nu, rho) + 1e-9


def test_identity_of_indiscernibles():
    mu = SparseMeasure([[0.0], [1.0]])
    assert w2_squared(mu, SparseMeasure([[0.0], [1.0 + 1e-9]])) > 0


@given(pairs(max_n=64, max_d=1))
def test_sort_path_equals_assignment(pair):
    mu, nu = pair
    a = optimal_plan(mu, nu, method="sort")
    b = optimal_plan(mu, nu, method="assignment")
    assert a.squared_cost == b.squared_cost


def test_sort_ties_lowest_index():
    plan = optimal_plan(SparseMeasure([1.0, 1.0]), SparseMeasure([5.0, 5.0]))
    assert plan.permutation.tolist() == [0, 1]


@given(pairs(), st.sampled_from([0.25, 0.5, 0.75]))
def test_geodesic_scaling(pair, t):
    mu, nu = pair
    mt = displacement_interpolate(mu, nu, t)
    total = w2_squared(mu, nu)
    assert math.isclose(w2_squared(mu, mt), t * t * total, rel_tol=1e-8, abs_tol=1e-9)


def test_interpolation_endpoints_and_midpoint():
    rng = np.random.default_rng(3)
    mu, nu = SparseMeasure(rng.normal(size=(5, 2))), SparseMeasure(rng.normal(size=(5, 2)))
    assert displacement_interpolate(mu, nu, 0.0) == mu
    assert w2_squared(displacement_interpolate(mu, nu, 1.0), nu) == 0.0
    mid = displacement_interpolate(SparseMeasure([[0.0]]), SparseMeasure([[2.0]]), 0.5)
    assert mid.particles.tolist() == [[1.0]]


def test_interpolation_clamps_tiny_overshoot():
    mu, nu = SparseMeasure([[0.0]]), SparseMeasure([[2.0]])
    assert displacement_interpolate(mu, nu, 1 + 1e-13).particles.tolist() == [[2.0]]
    assert displacement_interpolate(mu, nu, -1e-13) == mu


@pytest.mark.parametrize("t", [-0.1, 1.5])
def test_interpolation_rejects_t(t):
    with pytest.raises(ValueError):
        displacement_interpolate(SparseMeasure([[0.0]]), SparseMeasure([[1.0]]), t)


def test_mismatch_errors():
    with pytest.raises(ValueError, match="size"):
        optimal_plan(SparseMeasure([[0.0]]), SparseMeasure([[0.0], [1.0]]))
    with pytest.raises(ValueError, match="dimension"):
        optimal_plan(SparseMeasure([[0.0]]), SparseMeasure([[0.0, 1.0]]))
    with pytest.raises(ValueError):
        optimal_plan(SparseMeasure([[0.0, 1.0]]), SparseMeasure([[0.0, 1.0]]), method="sort")
