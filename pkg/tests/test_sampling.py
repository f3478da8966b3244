from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lindtwa.sampling import (CONTINUOUS, DISCRETE, SamplerSpec, SpinInit, sample_boson_coherent,
                              sample_continuous, sample_discrete, transverse_frame)

N = 100_000


def rng(seed=0):
    return np.random.default_rng(seed)


def test_discrete_down_support_and_frequencies():
    s = sample_discrete((0, 0, -1), rng(1), N)
    assert np.all(s[2] == -1.0)
    assert set(np.unique(s[0])) == {-1.0, 1.0} and set(np.unique(s[1])) == {-1.0, 1.0}
    sigma = np.sqrt(0.25 * 0.75 / N)
    for sx_ in (-1, 1):
        for sy_ in (-1, 1):
            f = np.mean((s[0] == sx_) & (s[1] == sy_))
            assert abs(f - 0.25) <= 3 * sigma


def test_discrete_mean_and_length():
    s = sample_discrete((0, 0, -1), rng(2), N)
    se = s.std(axis=1) / np.sqrt(N)
    assert np.all(np.abs(s.mean(axis=1) - [0, 0, -1]) <= 3 * se + 1e-15)
    assert np.allclose(np.linalg.norm(s, axis=0), np.sqrt(3), atol=0, rtol=1e-15)
    assert np.all(s.T @ np.array([0, 0, -1.0]) == 1.0)


@settings(max_examples=30, deadline=None)
@given(st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)).filter(
    lambda v: np.linalg.norm(v) > 0.1))
def test_discrete_arbitrary_orientation(v):
    n = np.asarray(v) / np.linalg.norm(v)
    s = sample_discrete(n, rng(3), 64)
    assert np.allclose(n @ s, 1.0, atol=1e-12)
    e1, e2, _ = transverse_frame(n)
    assert np.allclose(np.abs(e1 @ s), 1.0) and np.allclose(np.abs(e2 @ s), 1.0)


def test_transverse_frame_right_handed():
    for n in ([0, 0, 1], [1, 0, 0], [0, 1, 0], np.array([1, 2, 3]) / np.sqrt(14)):
        e1, e2, nn = transverse_frame(n)
        m = np.array([e1, e2, nn])
        assert np.allclose(m @ m.T, np.eye(3), atol=1e-14)
        assert np.isclose(np.linalg.det(m), 1.0)


def test_continuous_large_spin():
    s = sample_continuous((0, 0, 1), 10, rng(4), N)
    assert np.all(s[2] == 20.0)
    for ax in (0, 1):
        v = s[ax]
        assert abs(v.mean()) <= 3 * v.std() / np.sqrt(N)
        # variance of the sample variance for a Gaussian: 2 sigma^4 / N
        assert abs(v.var() - 20.0) <= 3 * np.sqrt(2 * 20.0 ** 2 / N)


def test_continuous_matches_discrete_moments():
    c = sample_continuous((0, 0, -1), 0.5, rng(5), N)
    d = sample_discrete((0, 0, -1), rng(6), N)
    assert np.all(c[2] == -1.0) and np.all(d[2] == -1.0)
    for ax in (0, 1):
        assert abs(c[ax].var() - 1.0) < 0.02
        assert d[ax].var() == pytest.approx(1.0, abs=0.02)


def test_continuous_delta_constraint_tilted():
    n = np.array([1.0, -2.0, 0.5]) / np.linalg.norm([1.0, -2.0, 0.5])
    s = sample_continuous(n, 1.5, rng(7), 1000)
    assert np.allclose(n @ s - 3.0, 0.0, atol=1e-12)


def test_boson_vacuum_and_coherent():
    a = sample_boson_coherent(0, rng(8), N)
    v = np.abs(a) ** 2
    assert abs(v.mean() - 0.5) <= 3 * v.std() / np.sqrt(N)
    b = sample_boson_coherent(2.0, rng(9), N)
    assert abs(b.real.mean() - 2.0) <= 3 * b.real.std() / np.sqrt(N)
    assert abs(b.imag.mean()) <= 3 * b.imag.std() / np.sqrt(N)
    w = np.abs(b) ** 2 - 0.5
    assert abs(w.mean() - 4.0) <= 3 * w.std() / np.sqrt(N)


def test_samplers_deterministic():
    spec = SamplerSpec((SpinInit((0, 0, 1)), SpinInit((1, 0, 0), 1.0, CONTINUOUS)), (0.5j,))
    a = spec.sample(rng(11), 100)
    b = spec.sample(rng(11), 100)
    assert np.array_equal(a, b)
    assert a.shape == (7, 100)


def test_spin_init_validation():
    with pytest.raises(ValueError):
        SpinInit((0, 0, 2))
    with pytest.raises(ValueError):
        SpinInit((0, 0, 1), 1.0, DISCRETE)
    with pytest.raises(ValueError):
        SpinInit((0, 0, 1), 0.5, "gaussian")


def test_sampler_dict_round_trip():
    spec = SamplerSpec((SpinInit((0, 0, -1)), SpinInit((0, 1, 0), 2.0, CONTINUOUS)), (1 + 2j,))
    assert SamplerSpec.from_dict(spec.to_dict()) == spec
