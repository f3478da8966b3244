from __future__ import annotations

import numpy as np
import pytest

from lindtwa.algebra import ClassicalExpr, boson, boson_conj, sminus, sx, sz
from lindtwa.errors import NonFiniteState
from lindtwa.integrator import IntegratorConfig, integrate_batch, integrate_trajectory, step
from lindtwa.langevin import ModelSpec, build_langevin
from lindtwa import models


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(1.0, dt=0.0)
    with pytest.raises(ValueError):
        IntegratorConfig(0.01, dt=0.1)
    with pytest.raises(ValueError):
        IntegratorConfig(1.0, dt=0.1, fixed_point_iters=1)


def test_default_dt_resolves_from_rates():
    spec = models.build_driven_spin(models.DrivenSpinParams(2.0, gamma_down=0.5))
    cfg = IntegratorConfig(1.0).resolve(spec)
    assert cfg.dt == pytest.approx(1e-3 / 2.0)


@pytest.mark.parametrize("backend", ["numpy", "numba", "codegen"])
def test_zero_force_is_bitwise_identity(backend):
    system = build_langevin(ModelSpec(2, ClassicalExpr()))
    state = np.random.default_rng(0).standard_normal((6, 5))
    out = step(state, system.compiled, None, 0.1, backend=backend)
    assert np.array_equal(out, state)


@pytest.mark.parametrize("backend", ["numpy", "numba", "codegen"])
def test_rabi_precession(backend):
    omega = 1.3
    system = build_langevin(ModelSpec(1, omega * sx(0)))
    dt = 1e-3 / omega
    cfg = IntegratorConfig(np.pi / omega, dt=dt)
    hist, aborted, _ = integrate_batch(np.array([[0.0], [0.0], [-1.0]]), system.compiled, cfg,
                                       np.random.default_rng(0), backend=backend)
    t = cfg.times()
    assert not aborted.any()
    assert abs(omega * t[-1] - np.pi) <= omega * dt
    assert abs(hist[-1, 2, 0] + np.cos(2 * omega * t[-1])) <= 1e-6
    # midpoint phase error stays second order over the whole half period
    assert np.abs(hist[:, 2, 0] + np.cos(2 * omega * t)).max() <= 1e-5


def test_ornstein_uhlenbeck_stationary_variance():
    # cavity loss alone: d(Re a) = -(kappa/2) Re a dt + noise of intensity kappa/4,
    # stationary variance sigma^2/(2 a) = 1/4
    kappa = 1.0
    spec = ModelSpec(0, ClassicalExpr(), [boson(0)], [[kappa]], n_bosons=1)
    system = build_langevin(spec)
    n = 100_000
    cfg = IntegratorConfig(12.0, dt=0.01, output_stride=1200)
    hist, _, _ = integrate_batch(np.zeros((1, n), dtype=complex), system.compiled, cfg,
                                 np.random.default_rng(5))
    x = hist[-1, 0].real
    var = x.var()
    se = np.sqrt(2.0 / n) * var
    # exact discrete-time variance differs from 1/4 by O(dt^2) only
    assert abs(var - 0.25 * (1 - np.exp(-kappa * 12.0))) <= 3 * se


def _tc_system():
    return build_langevin(models.build_tavis_cummings(
        models.TavisCummingsParams(3, 1.0, 0.7, 0.9, 1.0, 0.125, 0.375)))


def test_backends_agree():
    system = _tc_system()
    c = system.compiled
    rng = np.random.default_rng(3)
    spec = models.initial_state("all_up", system.spec)
    state = spec.sample(rng, 32)
    xi = c.draw_noise(rng, 32, 0.01)
    outs = {b: step(state, c, xi, 0.01, 6, 1e-14, backend=b) for b in ("numpy", "numba", "codegen")}
    assert np.abs(outs["numpy"] - outs["numba"]).max() < 1e-12
    assert np.abs(outs["numpy"] - outs["codegen"]).max() < 1e-12


def test_single_spin_length_per_trajectory():
    g = 1.0
    system = build_langevin(ModelSpec(1, ClassicalExpr(), [sminus(0)], [[g]]))
    cfg = IntegratorConfig(20.0 / g, dt=1e-3 / g, output_stride=100)
    init = np.array([[1.0, -1.0, 1.0, -1.0], [1.0, 1.0, -1.0, -1.0], [1.0, 1.0, 1.0, 1.0]])
    hist, aborted, _ = integrate_batch(init, system.compiled, cfg, np.random.default_rng(1))
    assert not aborted.any()
    length = np.sum(hist ** 2, axis=1)
    assert np.abs(length - 3.0).max() <= 1e-8


def test_noise_free_trajectory_equals_mean_field():
    spec = models.build_driven_spin(models.DrivenSpinParams(1.0))
    system = build_langevin(spec)
    cfg = IntegratorConfig(2.0, dt=1e-3)
    t, states = integrate_trajectory(np.array([0.0, 0.0, -1.0]), system, cfg, np.random.default_rng(0))
    assert np.allclose(states[:, 2], -np.cos(2 * t), atol=1e-6)


def test_same_seed_same_trajectory():
    system = _tc_system()
    spec = models.initial_state("all_up", system.spec)
    init = spec.sample(np.random.default_rng(0), 1)[:, 0]
    cfg = IntegratorConfig(1.0, dt=0.01, output_stride=10)
    a = integrate_trajectory(init, system, cfg, np.random.default_rng(9))[1]
    b = integrate_trajectory(init, system, cfg, np.random.default_rng(9))[1]
    assert np.array_equal(a, b)


def test_nonfinite_state_reported_with_time():
    system = build_langevin(ModelSpec(0, boson_conj(0) * boson(0), n_bosons=1))
    cfg = IntegratorConfig(1.0, dt=0.1)
    with pytest.raises(NonFiniteState) as err:
        integrate_trajectory(np.array([np.nan + 0j]), system, cfg, np.random.default_rng(0))
    assert err.value.time == 0.0


def test_runaway_spin_aborts():
    system = build_langevin(ModelSpec(1, sz(0)))
    cfg = IntegratorConfig(0.5, dt=0.1)
    _, aborted, when = integrate_batch(np.array([[0.0, 50.0], [0.0, 0.0], [-1.0, 0.0]]),
                                       system.compiled, cfg, np.random.default_rng(0))
    assert aborted.tolist() == [False, True]
    assert when[1] == 0.0
