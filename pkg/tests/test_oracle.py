from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp

from lindtwa import models
from lindtwa.algebra import ClassicalExpr, boson, sminus, sx, sy, sz
from lindtwa.ensemble import MeanExcitation, PhotonNumber, SpinExpectation
from lindtwa.errors import CutoffTooSmall, HilbertSpaceTooLarge, OrderingAmbiguity
from lindtwa.langevin import ModelSpec, factor_dissipation
from lindtwa.oracle import (HilbertLayout, build_operators, evolve, lift, product_state,
                            run_oracle)
from lindtwa.sampling import SamplerSpec, SpinInit

PX = np.array([[0, 1], [1, 0]], dtype=complex)
PY = np.array([[0, -1j], [1j, 0]])
PZ = np.diag([1.0, -1.0]).astype(complex)
SM = np.array([[0, 0], [1, 0]], dtype=complex)  # basis (up, down)


def kron_all(ops):
    out = np.array([[1.0 + 0j]])
    for o in ops:
        out = np.kron(out, o)
    return out


def site_op(op, i, n, tail=1):
    ops = [np.eye(2)] * n
    ops[i] = op
    return np.kron(kron_all(ops), np.eye(tail))


def dense(m):
    return m.toarray() if sp.issparse(m) else np.asarray(m)


def ket_rho(psi):
    return np.outer(psi, psi.conj())


def single_spin(omega, g):
    spec = models.build_driven_spin(models.DrivenSpinParams(omega, gamma_down=g))
    layout = HilbertLayout(1)
    h, jumps = build_operators(spec, layout)
    return spec, layout, h, jumps


def test_layout_dimension_and_cap():
    assert HilbertLayout(3, (4,)).dim == 8 * 5
    with pytest.raises(HilbertSpaceTooLarge):
        HilbertLayout(15)


def test_driven_spin_lift_exact():
    _, _, h, jumps = single_spin(0.7, 1.0)
    assert np.array_equal(dense(h), 0.7 * PX)
    assert np.allclose(dense(jumps[0]), SM)


def test_tc_lift_matches_printed_hamiltonian():
    n, nmax = 2, 4
    p = models.TavisCummingsParams(n, 1.3, 0.8, 0.9, 0.5, 0.1, 0.2)
    spec = models.build_tavis_cummings(p)
    layout = HilbertLayout(n, (nmax,))
    h, _ = build_operators(spec, layout)
    a = np.diag(np.sqrt(np.arange(1, nmax + 1)), 1).astype(complex)
    tail = nmax + 1
    A = np.kron(np.eye(2 ** n), a)
    want = p.omega * A.conj().T @ A
    for i in range(n):
        want += p.epsilon / 2 * site_op(PZ, i, n, tail)
        s_m = site_op(SM, i, n, tail)
        want += p.g / np.sqrt(n) * (A.conj().T @ s_m + A @ s_m.conj().T)
    # the top Fock level is distorted by truncation of a a^dag; compare below it
    keep = np.arange(layout.dim) % tail < nmax
    diff = (dense(h) - want)[np.ix_(keep, keep)]
    # symmetric ordering of abar*a lifts to a^dag a + 1/2: a constant shift only
    assert np.allclose(diff, diff[0, 0] * np.eye(keep.sum()), atol=1e-12)
    assert diff[0, 0] == pytest.approx(p.omega / 2)


def test_rydberg_lift_matches_printed_hamiltonian():
    n = 4
    p = models.RydbergChainParams(n, 0.6, 1.1, 0.1, 0.1)
    h, _ = build_operators(models.build_rydberg_chain(p), HilbertLayout(n))
    want = sum(p.omega * site_op(PX, i, n) for i in range(n))
    one = np.eye(2 ** n)
    for i in range(n):
        j = (i + 1) % n
        want = want + p.j / 4 * (one + site_op(PZ, i, n)) @ (one + site_op(PZ, j, n))
    assert np.allclose(dense(h), want, atol=1e-12)


def test_ordering_ambiguity():
    spec = ModelSpec(1, sx(0) * sy(0) + sy(0) * sx(0))
    with pytest.raises(OrderingAmbiguity):
        build_operators(spec, HilbertLayout(1))


def test_cutoff_warning():
    sampler = SamplerSpec((), (2.0 + 0j,))
    with pytest.warns(CutoffTooSmall):
        product_state(sampler, HilbertLayout(0, (4,)))


def test_amplitude_damping_curve():
    _, _, h, jumps = single_spin(0.0, 1.0)
    rho0 = ket_rho(np.array([1.0, 0.0], dtype=complex))
    t = np.linspace(0, 6, 61)
    res = evolve(rho0, h, jumps, [[1.0]], t, {"z": (sp.csr_matrix(PZ), 0.0)})
    assert np.abs(res.values[:, 0] - (2 * np.exp(-t) - 1)).max() <= 1e-8
    assert res.max_trace_drift <= 1e-9
    assert res.max_hermiticity <= 1e-10


def test_optical_bloch_steady_state():
    omega, g = 0.6, 1.0
    _, _, h, jumps = single_spin(omega, g)
    rho0 = ket_rho(np.array([0.0, 1.0], dtype=complex))
    res = evolve(rho0, h, jumps, [[g]], [0.0, 40.0], {"z": (sp.csr_matrix(PZ), 0.0)})
    want = -g ** 2 / (g ** 2 + 8 * omega ** 2)
    assert abs(res.values[-1, 0] - want) <= 1e-6


def test_unitary_purity():
    spec = models.build_rydberg_chain(models.RydbergChainParams(3, 0.8, 1.0))
    layout = HilbertLayout(3)
    h, _ = build_operators(spec, layout)
    rho0 = product_state(models.initial_state("all_down", spec), layout)
    res = evolve(rho0, h, [], np.zeros((0, 0)), np.linspace(0, 5, 6), {})
    rho = res.final_rho
    assert abs(np.trace(rho @ rho).real - 1.0) <= 1e-9


def test_linearity():
    spec = models.build_central_spin(models.CentralSpinParams(2, 1, 1, 3, 1, 0.5, 1.5))
    layout = HilbertLayout(3)
    h, jumps = build_operators(spec, layout)
    rng = np.random.default_rng(0)

    def rand_state():
        v = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        return ket_rho(v / np.linalg.norm(v))

    r1, r2 = rand_state(), rand_state()
    t = np.linspace(0, 2, 5)
    e1 = evolve(r1, h, jumps, spec.gamma, t, {}).final_rho
    e2 = evolve(r2, h, jumps, spec.gamma, t, {}).final_rho
    em = evolve(0.3 * r1 + 0.7 * r2, h, jumps, spec.gamma, t, {}).final_rho
    assert np.abs(em - (0.3 * e1 + 0.7 * e2)).max() <= 1e-10


def test_diagonal_basis_equivalence():
    spec = models.build_atom_array(models.AtomArrayParams(4, 0.15, omega=0.4))
    f = factor_dissipation(spec.gamma)
    v = f.eigenvectors
    jumps = [sum((complex(np.conj(v[i, j])) * spec.jumps[i] for i in range(4)), ClassicalExpr())
             for j in range(4)]
    rotated = ModelSpec(4, spec.hamiltonian, jumps, np.diag(f.eigenvalues))
    sampler = models.initial_state("all_up", spec)
    t = np.linspace(0, 3, 7)
    obs = [MeanExcitation(), SpinExpectation(1, "x")]
    a = run_oracle(spec, sampler, t, obs)
    b = run_oracle(rotated, sampler, t, obs)
    assert np.abs(a.mean - b.mean).max() <= 1e-9


def test_photon_number_and_cavity_decay():
    kappa = 0.8
    spec = ModelSpec(0, boson(0).conjugate() * boson(0), [boson(0)], [[kappa]], n_bosons=1)
    sampler = SamplerSpec((), (1.2 + 0j,))
    t = np.linspace(0, 3, 7)
    res = run_oracle(spec, sampler, t, [PhotonNumber(0)], n_max=(14,))
    assert np.allclose(res.mean[:, 0], 1.44 * np.exp(-kappa * t), atol=1e-6)


def test_product_state_orientation():
    sampler = SamplerSpec((SpinInit((1.0, 0.0, 0.0)), SpinInit((0.0, 0.0, -1.0))))
    layout = HilbertLayout(2)
    rho = product_state(sampler, layout)
    assert np.trace(rho @ site_op(PX, 0, 2)).real == pytest.approx(1.0)
    assert np.trace(rho @ site_op(PZ, 1, 2)).real == pytest.approx(-1.0)
    assert np.trace(rho).real == pytest.approx(1.0)
