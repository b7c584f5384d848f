import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rplab.concentration import (
    All,
    RandomK,
    annulus_concentration,
    concentration_at,
    concentration_profile,
    concentration_values,
    parse_sample_policy,
    sample_indices,
    slab_mass,
    tube_cover_count,
)
from rplab.errors import InvalidInput
from rplab.measures import FiniteMeasure, ball_mass, uniform_on
from rplab.rep_core import PK, PiTR, RepPush, a_matrix, u_matrix

SPECS = [PiTR(1.0, 0.4), PK(2, 1, 0.8), PK(2, 2, 0.3), PK(2, 0, 0.5), RepPush(2, 0.5, 0.7)]


def ball_points(seed, size, dim=3):
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((size, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * rng.random((size, 1)) ** (1 / dim) * 0.99


def test_parse_sample_policy():
    assert parse_sample_policy("all") == All()
    assert parse_sample_policy("random:50") == RandomK(50, 0)
    assert parse_sample_policy("Random:50:7") == RandomK(50, 7)
    with pytest.raises(InvalidInput):
        parse_sample_policy("some")


def test_sample_indices_seeded():
    a = sample_indices(1000, RandomK(20, 3))
    assert np.array_equal(a, sample_indices(1000, RandomK(20, 3)))
    assert len(np.unique(a)) == 20 and np.all(np.diff(a) > 0)
    assert np.array_equal(sample_indices(5, RandomK(20)), np.arange(5))
    with pytest.raises(InvalidInput):
        sample_indices(5, RandomK(0))


def test_concentration_examples():
    mu = uniform_on(ball_points(0, 40))
    assert concentration_at(mu, PiTR(0.0, 0.5), mu.points[0], 10.0) == 1.0
    assert concentration_at(mu, PK(2, 2, 0.5), mu.points[3], 1e-9) == pytest.approx(1 / 40)


@pytest.mark.parametrize("r", [0.0, 0.3, 1.0])
@pytest.mark.parametrize("delta", [0.01, 0.2])
def test_two_point_collapse(r, delta):
    h = 0.4
    mu = uniform_on([[0.0, 0.0, 0.0], [0.0, 0.0, h]])
    expected = 1.0 if math.hypot(r * r * h / 2, r * h) <= delta else 0.5
    assert concentration_at(mu, PiTR(0.0, r), [0, 0, 0], delta) == expected


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: type(s).__name__ + str(getattr(s, "k", "")))
@pytest.mark.parametrize("weighted", [False, True])
def test_accelerated_equals_oracle(spec, weighted):
    pts = ball_points(11, 500)
    if weighted:
        w = np.random.default_rng(1).random(500) + 0.1
        mu = FiniteMeasure(pts, w / w.sum(), 2)
    else:
        mu = uniform_on(pts)
    for delta in (2**-2, 2**-4, 2**-6):
        fast = concentration_values(mu, spec, delta)
        slow = concentration_values(mu, spec, delta, method="brute")
        np.testing.assert_array_equal(fast, slow)
        some = [0, 17, 256]
        np.testing.assert_array_equal(fast[some], [concentration_at(mu, spec, mu.points[i], delta) for i in some])


def test_restricted_values_match_oracle():
    mu = uniform_on(ball_points(12, 400))
    active = np.random.default_rng(2).random(400) < 0.6
    q = np.arange(0, 400, 7)
    fast = concentration_values(mu, PiTR(0.5, 0.6), 0.05, query_idx=q, active=active)
    slow = concentration_values(mu, PiTR(0.5, 0.6), 0.05, query_idx=q, active=active, method="brute")
    np.testing.assert_array_equal(fast, slow)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), d1=st.floats(0.001, 0.5), d2=st.floats(0.001, 0.5))
def test_monotone_in_delta(seed, d1, d2):
    mu = uniform_on(ball_points(seed, 80))
    lo, hi = sorted((d1, d2))
    spec = PK(2, 2, 0.4)
    assert np.all(concentration_values(mu, spec, lo) <= concentration_values(mu, spec, hi))


def test_profile_examples(tmp_path):
    # images 0, 0.5, 1 along x under PK(k=1, r=0)
    mu = uniform_on([[0.0, 0.1, 0.2], [0.5, -0.3, 0.1], [-0.5, 0.0, 0.0]])
    prof = concentration_profile(mu, PK(2, 1, 0.0), 0.1)
    np.testing.assert_allclose(prof.values, [1 / 3] * 3)
    big = uniform_on(ball_points(3, 300))
    prof = concentration_profile(big, PiTR(0.2, 0.9), 0.1, RandomK(50, 1))
    q = prof.quantiles
    assert prof.values.min() <= q["median"] <= q["p90"] <= q["p99"] <= q["max"] == prof.values.max()
    prof.write(tmp_path / "p.csv", tmp_path / "p.json")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "point_index,m_delta" and len(lines) == 51
    side = json.loads((tmp_path / "p.json").read_text())
    assert set(side) == {"spec", "delta", "quantiles"}


def test_annulus_examples():
    mu = uniform_on(ball_points(4, 100))
    assert annulus_concentration(mu, PK(2, 1, 0.5), mu.points[0], 0.1, 2.5) == 0.0
    b = 0.2
    two = uniform_on([[0.0, 0.0, 0.0], [0.0, 0.0, 1.5 * b]])
    assert annulus_concentration(two, PK(2, 1, 0.0), [0, 0, 0], 0.01, b) == 0.5


def test_annuli_reconstruct_concentration():
    mu = uniform_on(ball_points(5, 300))
    spec, delta = PiTR(0.3, 0.7), 0.2
    w = mu.points[9]
    total = mu.weights[9]
    b = 1.0
    while b > 1e-4:
        # shells [b, 2b] overlap only on their boundary spheres
        total += annulus_concentration(mu, spec, w, delta, b)
        b /= 2
    assert total == pytest.approx(concentration_at(mu, spec, w, delta), abs=1e-12)


def test_slab_examples():
    s = np.linspace(0, 1, 201)
    sigma = uniform_on(np.column_stack([np.zeros_like(s), np.zeros_like(s), s * 0.9]))
    r = 0.8
    for b in (0.01, 0.05, 0.2):
        expected = min(1.0, 2 * b / (0.9 * r * r))
        assert slab_mass(sigma, r, b, [0, 0, 0]) == pytest.approx(expected, abs=0.01)
    assert slab_mass(sigma, r, 10.0, [0, 0, 0]) == 1.0
    with pytest.raises(InvalidInput):
        slab_mass(uniform_on([[0.1, 0.2]]), r, 0.1, [0, 0])


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), r=st.floats(0, 1), b1=st.floats(1e-3, 1), b2=st.floats(1e-3, 1))
def test_slab_monotone(seed, r, b1, b2):
    sigma = uniform_on(ball_points(seed, 60))
    lo, hi = sorted((b1, b2))
    assert slab_mass(sigma, r, lo, sigma.points[0]) <= slab_mass(sigma, r, hi, sigma.points[0])


def test_tube_cover_examples():
    assert tube_cover_count(uniform_on([[0.1, 0.2, 0.3]]), 2, 2, 0.5, 0.01) == 1
    # dense net of the ball projected to x + r y + r^2 z/2
    g = np.linspace(-0.57, 0.57, 21)
    net = np.stack(np.meshgrid(g, g, g, indexing="ij"), -1).reshape(-1, 3)
    mu = uniform_on(net)
    r, delta = 0.5, 0.05
    length = 2 * 0.57 * (1 + r + r * r / 2)
    count = tube_cover_count(mu, 2, 1, r, delta)
    assert length / delta / 4 <= count <= 4 * length / delta
    assert tube_cover_count(mu, 2, 1, r, delta, mass_floor=1.1) == 0


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), k=st.integers(1, 3), j=st.integers(2, 8))
def test_tube_cover_nonincreasing(seed, k, j):
    mu = uniform_on(ball_points(seed, 150))
    d = 2.0**-j
    assert tube_cover_count(mu, 2, k, 0.6, 2 * d) <= tube_cover_count(mu, 2, k, 0.6, d)


def test_rep_push_preimage_in_ball():
    # |a_t u_r x| <= delta implies |x| <= ||(a_t u_r)^{-1}|| delta
    mu = uniform_on(ball_points(6, 400))
    rng = np.random.default_rng(9)
    for _ in range(10):
        t, r, delta = rng.uniform(0, 2), rng.uniform(0, 1), rng.uniform(0.01, 0.1)
        inv = np.linalg.inv(a_matrix(2, t) @ u_matrix(2, r))
        c = np.linalg.norm(inv, 2) * (1 + 1e-9)
        w = mu.points[rng.integers(400)]
        assert concentration_at(mu, RepPush(2, t, r), w, delta) <= ball_mass(mu, w, c * delta)


def test_nonpositive_delta_rejected():
    mu = uniform_on([[0.0, 0.0, 0.0]])
    with pytest.raises(InvalidInput):
        concentration_at(mu, PK(2, 1, 0.1), [0, 0, 0], 0.0)
    with pytest.raises(InvalidInput):
        concentration_profile(mu, PK(2, 1, 0.1), -1.0)
