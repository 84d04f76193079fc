import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from particlegd.measure import (
    Gaussian,
    SparseMeasure,
    UniformBox,
    law_from_config,
    min_pairwise_distance,
    random_init,
)

finite = st.floats(-1e6, 1e6, allow_nan=False)


def test_construction_shapes():
    assert (SparseMeasure([[0.0], [1.0]]).n, SparseMeasure([[0.0], [1.0]]).d) == (2, 1)
    m = SparseMeasure([[1, 0], [0, 1]])
    assert (m.n, m.d) == (2, 2)
    assert SparseMeasure([0.5, 1.5, 2.5]).particles.shape == (3, 1)


@pytest.mark.parametrize("bad", [[[0.0], [math.nan]], [[math.inf]], [], [[1, 2], [3]]])
def test_construction_rejects(bad):
    with pytest.raises(ValueError):
        SparseMeasure(bad)


def test_particles_are_read_only():
    m = SparseMeasure([[1.0, 2.0]])
    with pytest.raises(ValueError):
        m.particles[0, 0] = 5.0


@given(arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 4)), elements=finite))
def test_round_trip_bitwise(arr):
    m = SparseMeasure(arr)
    assert np.array_equal(m.particles, arr)
    assert SparseMeasure.from_json(m.to_json()) == m


def test_save_load_csv_and_json(tmp_path):
    m = SparseMeasure(np.random.default_rng(0).normal(size=(5, 3)))
    for name in ("m.csv", "m.json"):
        m.save(tmp_path / name)
        assert SparseMeasure.load(tmp_path / name) == m
    assert json.loads(m.to_json()) == m.particles.tolist()


def test_random_init_deterministic():
    a = random_init(3, 1, UniformBox(0, 1), seed=7)
    b = random_init(3, 1, UniformBox(0, 1), seed=7)
    assert a == b


def test_random_init_uniform_box_distinct_in_range():
    m = random_init(100, 1, UniformBox(0, 1), seed=1)
    x = m.particles[:, 0]
    assert len(np.unique(x)) == 100
    assert np.all((x >= 0) & (x <= 1))


def test_random_init_sphere_unit_norm():
    m = random_init(4, 4, "uniform_sphere", seed=2)
    assert np.allclose(np.linalg.norm(m.particles, axis=1), 1.0, rtol=0, atol=1e-12)


def test_random_init_seeds_differ():
    draws = [random_init(5, 2, {"kind": "gaussian"}, seed=s).particles for s in range(10)]
    for i in range(10):
        for j in range(i + 1, 10):
            assert not np.array_equal(draws[i], draws[j])


@pytest.mark.parametrize("cfg", [{"kind": "uniform_box", "a": 1, "b": 1},
                                 {"kind": "gaussian", "std": 0.0},
                                 {"kind": "nope"}])
def test_invalid_laws(cfg):
    with pytest.raises(ValueError):
        law_from_config(cfg)


def test_law_objects():
    assert law_from_config({"kind": "gaussian", "mean": 1.0, "std": 2.0}) == Gaussian(1.0, 2.0)


@pytest.mark.parametrize("pts,expected", [([[0], [1], [3]], 1.0), ([[2], [2]], 0.0),
                                          ([[0, 0], [3, 4]], 5.0), ([[7.0]], math.inf)])
def test_min_pairwise_distance(pts, expected):
    assert min_pairwise_distance(SparseMeasure(pts)) == expected


def test_permuted():
    m = SparseMeasure([[0.0], [1.0], [2.0]])
    assert m.permuted([2, 0, 1]).particles[:, 0].tolist() == [2.0, 0.0, 1.0]
