from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lindtwa.algebra import (NOISE, ClassicalExpr, Variable, boson, boson_conj, const, sminus,
                             splus, sx, sy, sz)
from lindtwa.errors import NegativeGammaEigenvalue, NonHermitianGamma, UnknownVariable
from lindtwa.langevin import ModelSpec, build_langevin, effective_hamiltonian, factor_dissipation
from lindtwa.models import atom_array_matrices, AtomArrayParams
from lindtwa import models

from .helpers import diffusion, diffusion_from_rhs, noise_free, random_psd, svar

X, Y, Z = svar(0, 0), svar(0, 1), svar(0, 2)


def nz(k):
    return ClassicalExpr({(Variable(NOISE, k, 0),): 1.0})


def single(jump, rate, h=None):
    return build_langevin(ModelSpec(1, h if h is not None else ClassicalExpr(), [jump], [[rate]]))


# Single-spin channel rows (loss, pump, dephasing), written with independent real noises n_k of the listed variance
def table_loss(g):
    return {X: g * sx(0) * sz(0) / 2 + nz(0) * sz(0),
            Y: g * sy(0) * sz(0) / 2 + nz(1) * sz(0),
            Z: -g * (sx(0) * sx(0) + sy(0) * sy(0)) / 2 - (nz(0) * sx(0) + nz(1) * sy(0))}, {0: g, 1: g}


def table_pump(g):
    return {X: -g * sx(0) * sz(0) / 2 - nz(0) * sz(0),
            Y: -g * sy(0) * sz(0) / 2 + nz(1) * sz(0),
            Z: g * (sx(0) * sx(0) + sy(0) * sy(0)) / 2 + (nz(0) * sx(0) - nz(1) * sy(0))}, {0: g, 1: g}


def table_dephasing(k):
    return {X: 2 * nz(0) * sy(0), Y: -2 * nz(0) * sx(0), Z: ClassicalExpr()}, {0: k}


@pytest.mark.parametrize("jump,table", [(sminus(0), table_loss), (splus(0), table_pump),
                                        (sz(0), table_dephasing)])
@pytest.mark.parametrize("rate", [1.0, 0.37])
def test_table_rows(jump, table, rate):
    system = single(jump, rate)
    rhs, variances = table(rate)
    for v in (X, Y, Z):
        assert system.drift[v].equals(noise_free(rhs[v]), atol=1e-12), v
    got, want = diffusion(system), diffusion_from_rhs(rhs, variances)
    for key in want:
        assert got[key].equals(want[key], atol=1e-12), key


def test_driven_spin_block():
    omega, g = 0.8, 0.3
    system = single(sminus(0), g, h=omega * 2 * sx(0) / 2)
    assert system.drift[X].equals(g / 2 * sx(0) * sz(0))
    assert system.drift[Y].equals(-2 * omega * sz(0) + g / 2 * sy(0) * sz(0))
    assert system.drift[Z].equals(2 * omega * sy(0) - g / 2 * (sx(0) * sx(0) + sy(0) * sy(0)))
    # coupling of s^x to the x-component of the loss noise is s^z
    assert system.noise_couplings[(X, (0, 0))].equals(sz(0))
    assert system.noise_couplings[(Z, (0, 0))].equals(-sx(0))
    # the y component may come out relabelled xi^y -> -xi^y (same covariance)
    cy = system.noise_couplings[(Y, (0, 1))]
    sign = 1.0 if cy.equals(sz(0)) else -1.0
    assert cy.equals(sign * sz(0))
    assert system.noise_couplings[(Z, (0, 1))].equals(-sign * sy(0))


def test_hamiltonian_only_flow():
    h = 0.7 * sx(0) * sx(1) + 1.3 * sz(1)
    system = build_langevin(ModelSpec(2, h))
    assert not system.noise_couplings
    for v in system.variables:
        from lindtwa.algebra import poisson_bracket
        psi = ClassicalExpr({(v,): 1.0})
        assert system.drift[v].equals(poisson_bracket(psi, h))


def test_effective_hamiltonian_has_aux_fields():
    h = effective_hamiltonian(ModelSpec(1, sx(0), [sminus(0)], [[1.0]]))
    kinds = {v.kind for v in h.variables()}
    assert len(kinds) == 3  # spin, phi, phibar


def test_boson_loss_reproduces_cavity_equation():
    kappa, omega = 0.4, 1.1
    spec = ModelSpec(0, omega * boson_conj(0) * boson(0), [boson(0)], [[kappa]], n_bosons=1)
    system = build_langevin(spec)
    a = Variable(models.boson(0).variables().pop().kind, 0)
    assert system.drift[a].equals(-1j * omega * boson(0) - kappa / 2 * boson(0))


def _all_specs():
    return [
        models.build_driven_spin(models.DrivenSpinParams(1.0, 0.3, 0.2)),
        models.build_tavis_cummings(models.TavisCummingsParams(3, 1, 1, 0.9, 1, 0.125, 0.375)),
        models.build_central_spin(models.CentralSpinParams(3, 1, 1, 3, 1, 0.5, 1.5)),
        models.build_rydberg_chain(models.RydbergChainParams(4, 1.0, 1.0, 0.1, 0.1)),
        models.build_atom_array(models.AtomArrayParams(4, 0.2, omega=0.5)),
    ]


@pytest.mark.parametrize("spec", _all_specs(), ids=lambda s: s.name)
def test_spin_length_identity(spec):
    system = build_langevin(spec)
    for k in range(spec.n_spins):
        for name, res in system.spin_length_residuals(k).items():
            assert res.chop(1e-12).is_zero(), (k, name, str(res))


@pytest.mark.parametrize("spec", _all_specs(), ids=lambda s: s.name)
def test_zero_rate_limit(spec):
    zero = ModelSpec(spec.n_spins, spec.hamiltonian, spec.jumps, np.zeros_like(spec.gamma),
                     spec.n_bosons, spec.spin_sizes)
    system = build_langevin(zero)
    bare = build_langevin(ModelSpec(spec.n_spins, spec.hamiltonian, n_bosons=spec.n_bosons,
                                    spin_sizes=spec.spin_sizes))
    assert not system.noise_couplings
    for v in system.variables:
        assert system.drift[v].equals(bare.drift[v])


def test_diagonal_basis_rebuild():
    spec = models.build_atom_array(AtomArrayParams(4, 0.15, omega=0.3))
    f = factor_dissipation(spec.gamma)
    v = f.eigenvectors
    # L'_j = sum_i conj(V_ij) L_i, Gamma' = diag(w)
    jumps = [sum((complex(np.conj(v[i, j])) * spec.jumps[i] for i in range(4)), ClassicalExpr())
             for j in range(4)]
    rotated = ModelSpec(4, spec.hamiltonian, jumps, np.diag(f.eigenvalues))
    a, b = build_langevin(spec), build_langevin(rotated)
    for var in a.variables:
        assert a.drift[var].equals(b.drift[var], atol=1e-11)
    da, db = diffusion(a), diffusion(b)
    for key in da:
        assert da[key].equals(db[key], atol=1e-11)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 64), st.integers(0, 2**32 - 1), st.booleans())
def test_factor_reconstructs_gamma(n, seed, low_rank):
    rng = np.random.default_rng(seed)
    gamma = random_psd(rng, n, rank=max(1, n // 3) if low_rank else n)
    f = factor_dissipation(gamma)
    assert np.abs(f.factor @ f.factor.conj().T - gamma).max() <= 1e-10 * max(1, np.abs(gamma).max())
    assert np.all(np.diff(f.eigenvalues) <= 0)
    assert np.all(f.eigenvalues >= 0)


def test_factor_examples():
    f = factor_dissipation(0.7 * np.eye(3))
    assert np.allclose(f.eigenvalues, 0.7)
    assert np.allclose(np.abs(f.factor), np.sqrt(0.7) * np.eye(3))
    f = factor_dissipation(np.full((2, 2), 1.3))
    assert np.allclose(f.eigenvalues, [2.6, 0.0])
    assert f.eigenvalues[1] == 0.0


def test_factor_superradiant_mode():
    _, g = atom_array_matrices(AtomArrayParams(10, 0.1))
    f = factor_dissipation(g)
    assert f.eigenvalues[0] > 1.0


def test_factor_errors():
    with pytest.raises(NonHermitianGamma):
        factor_dissipation(np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(NegativeGammaEigenvalue):
        factor_dissipation(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_spec_validation():
    with pytest.raises(UnknownVariable):
        ModelSpec(1, sx(3))
    with pytest.raises(UnknownVariable):
        ModelSpec(1, sx(0), [boson(0)], [[1.0]])
    with pytest.raises(NonHermitianGamma):
        ModelSpec(1, sx(0), [sminus(0), splus(0)], [[1.0, 1j], [1j, 1.0]])
    with pytest.raises(ValueError):
        ModelSpec(1, 1j * sx(0))


def test_negative_rate_rejected_at_build():
    with pytest.raises(NegativeGammaEigenvalue):
        build_langevin(ModelSpec(1, sx(0), [sminus(0)], [[-1.0]]))


def test_json_dump():
    system = single(sminus(0), 0.5, h=sx(0))
    data = json.loads(system.to_json())
    assert data["model"] and data["gamma_eigenvalues"] == [0.5]
    assert any("xi" in k for k in data["noise_couplings"])
    text = system.dump_text()
    assert "xix0" in text and "xiy0" in text
