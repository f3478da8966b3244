"""Small utilities shared by tests."""

from __future__ import annotations

import numpy as np

from lindtwa.algebra import NOISE, SPIN, ClassicalExpr, Variable


def svar(site, axis):
    return Variable(SPIN, site, axis)


def diffusion(system):
    """Symbolic diffusion ``D_vw = sum_{i,j,a} C[v,(i,a)] Gamma_ij C[w,(j,a)]``.

    Invariant under orthogonal mixing of the real noise components, so it
    is the right object for comparing noise structure.
    """
    gamma = system.spec.gamma
    out = {}
    for v in system.variables:
        for w in system.variables:
            acc = ClassicalExpr()
            for (vv, (i, a)), cv in system.noise_couplings.items():
                if vv != v:
                    continue
                for (ww, (j, b)), cw in system.noise_couplings.items():
                    if ww == w and a == b and gamma[i, j] != 0:
                        acc = acc + complex(gamma[i, j]) * cv * cw
            out[(v, w)] = acc.chop(1e-12)
    return out


def diffusion_from_rhs(rhs: dict, variances: dict):
    """Diffusion matrix for hand-written equations with independent real noises.

    ``rhs`` maps variables to expressions containing ``Variable(NOISE, k, 0)``
    symbols; ``variances`` maps ``k`` to the noise variance.
    """
    out = {}
    for v, ev in rhs.items():
        for w, ew in rhs.items():
            acc = ClassicalExpr()
            for k, var in variances.items():
                n = Variable(NOISE, k, 0)
                acc = acc + var * ev.diff(n) * ew.diff(n)
            out[(v, w)] = acc.chop(1e-12)
    return out


def noise_free(expr):
    return expr.substitute({v: 0.0 for v in expr.variables() if v.kind == NOISE})


def random_psd(rng, n, rank=None, complex_=True):
    rank = n if rank is None else rank
    a = rng.standard_normal((n, rank))
    if complex_:
        a = a + 1j * rng.standard_normal((n, rank))
    return a @ a.conj().T
