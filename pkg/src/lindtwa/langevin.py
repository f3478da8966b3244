"""Compile a Lindblad model into classical stochastic (Langevin) equations.

The builder follows the effective-Hamiltonian recipe literally: jump variables
are coupled to inert auxiliary fields ``phi_i``,

    H_eff = H - i sum_i (conj(L_i) phi_i - conj(phi_i) L_i),

every dynamical variable gets ``d psi/dt = {psi, H_eff}`` with the fields held
fixed, and only afterwards the fields are replaced by

    phi_i = 1/2 sum_j Gamma_ij L_j + 1/2 xi_i,     xi_i = xi_i^x + i xi_i^y.

The real components ``xi_i^x, xi_i^y`` are white noises with covariance
``<xi_i^a xi_j^b> = Re(Gamma_ij) delta_ab delta(t - t')`` (for real Gamma; the
general complex case is sampled through :class:`DissipationFactor`).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .algebra import (
    AUX,
    AUX_CONJ,
    BOSON,
    BOSON_CONJ,
    NOISE,
    SPIN,
    ClassicalExpr,
    Variable,
    aux,
    aux_conj,
    noise,
    poisson_bracket,
)
from .errors import (
    NegativeGammaEigenvalue,
    NonHermitianGamma,
    NonHermitianHamiltonian,
    UnknownVariable,
)

__all__ = [
    "ModelSpec",
    "DissipationFactor",
    "LangevinSystem",
    "factor_dissipation",
    "build_langevin",
]

EIG_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Classical image of a Lindbladian.

    Attributes
    ----------
    n_spins, n_bosons : int
        System layout.
    hamiltonian : ClassicalExpr
        Real classical Hamiltonian.
    jumps : tuple of ClassicalExpr
        Jump variables ``L_i``; rates live in ``gamma``.
    gamma : ndarray
        Hermitian positive semidefinite dissipation matrix, shape
        ``(len(jumps), len(jumps))``.
    spin_sizes : tuple of float
        Spin size ``S`` per site (classical length ``2S``).
    name : str
        Free-form label.
    info : dict
        Model metadata (parameters, emission-rate normalisation...).
    """

    n_spins: int
    hamiltonian: ClassicalExpr
    jumps: tuple = ()
    gamma: np.ndarray | None = None
    n_bosons: int = 0
    spin_sizes: tuple | None = None
    name: str = "model"
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        jumps = tuple(self.jumps)
        object.__setattr__(self, "jumps", jumps)
        n = len(jumps)
        gamma = np.zeros((n, n)) if self.gamma is None else np.atleast_2d(np.asarray(self.gamma))
        if n == 0:
            gamma = np.zeros((0, 0))
        if gamma.shape != (n, n):
            raise ValueError(f"gamma has shape {gamma.shape}, expected {(n, n)}")
        if np.iscomplexobj(gamma) and np.all(gamma.imag == 0):
            gamma = gamma.real
        scale = max(np.abs(gamma).max(initial=0.0), 1.0)
        if np.abs(gamma - gamma.conj().T).max(initial=0.0) > EIG_TOL * scale:
            raise NonHermitianGamma("dissipation matrix is not Hermitian")
        gamma = gamma.copy()
        gamma.setflags(write=False)
        object.__setattr__(self, "gamma", gamma)

        sizes = self.spin_sizes
        sizes = (0.5,) * self.n_spins if sizes is None else tuple(float(s) for s in sizes)
        if len(sizes) != self.n_spins:
            raise ValueError("spin_sizes must have one entry per spin")
        for s in sizes:
            if s <= 0 or abs(2 * s - round(2 * s)) > 1e-12:
                raise ValueError(f"spin size {s} is not a positive half-integer")
        object.__setattr__(self, "spin_sizes", sizes)

        for expr in (self.hamiltonian, *jumps):
            self._check_variables(expr)
        h = self.hamiltonian
        tol = EIG_TOL * max(h.max_abs_coefficient(), 1.0)
        if not h.equals(h.conjugate(), atol=tol):
            raise NonHermitianHamiltonian("Hamiltonian is not real-valued")

    def _check_variables(self, expr: ClassicalExpr) -> None:
        for v in expr.variables():
            if v.kind == SPIN and 0 <= v.index < self.n_spins and 0 <= v.axis < 3:
                continue
            if v.kind in (BOSON, BOSON_CONJ) and 0 <= v.index < self.n_bosons:
                continue
            raise UnknownVariable(f"variable {v} is not declared by the model layout")

    @property
    def n_jumps(self) -> int:
        return len(self.jumps)

    def dynamical_variables(self) -> list[Variable]:
        out = [Variable(SPIN, k, ax) for k in range(self.n_spins) for ax in range(3)]
        out += [Variable(BOSON, m) for m in range(self.n_bosons)]
        return out

    def rate_scale(self) -> float:
        """Largest of the Hamiltonian coefficients and Gamma eigenvalues."""
        scale = self.hamiltonian.max_abs_coefficient()
        if self.n_jumps:
            scale = max(scale, float(np.abs(np.linalg.eigvalsh(self.gamma)).max()))
        return scale


@dataclass(frozen=True)
class DissipationFactor:
    """Eigen-decomposition ``Gamma = V diag(rates) V^dagger = B B^dagger``."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    factor: np.ndarray

    @property
    def active(self) -> np.ndarray:
        """Columns of ``B`` with non-zero rate."""
        return self.factor[:, self.eigenvalues > 0]


def factor_dissipation(gamma) -> DissipationFactor:
    """Diagonalise a Hermitian PSD dissipation matrix.

    Eigenvalues come out in descending order; those with magnitude below
    ``1e-12 * max`` are clamped to zero.

    Raises
    ------
    NonHermitianGamma
        If ``gamma`` is not Hermitian.
    NegativeGammaEigenvalue
        If an eigenvalue is below ``-1e-12 * max``.
    """
    gamma = np.atleast_2d(np.asarray(gamma))
    if gamma.size == 0:
        return DissipationFactor(np.zeros(0), np.zeros((0, 0)), np.zeros((0, 0)))
    scale = max(np.abs(gamma).max(), 1e-300)
    if np.abs(gamma - gamma.conj().T).max() > EIG_TOL * max(scale, 1.0):
        raise NonHermitianGamma("dissipation matrix is not Hermitian")
    herm = 0.5 * (gamma + gamma.conj().T)
    if np.iscomplexobj(herm) and np.all(herm.imag == 0):
        herm = herm.real
    w, v = np.linalg.eigh(herm)
    order = np.argsort(-w, kind="stable")
    w, v = w[order], v[:, order]
    top = max(abs(w[0]), abs(w[-1]))
    if top > 0 and w[-1] < -EIG_TOL * top:
        raise NegativeGammaEigenvalue(
            f"dissipation matrix has eigenvalue {w[-1]:.3e} < 0 (max {top:.3e})"
        )
    w = np.where(np.abs(w) <= EIG_TOL * top, 0.0, w)
    b = v * np.sqrt(w)[None, :]
    return DissipationFactor(w, v, b)


NoiseComponent = tuple  # (jump index, axis 0|1)


@dataclass(eq=False)
class LangevinSystem:
    """Drift and multiplicative noise couplings for every dynamical variable.

    ``d psi/dt = drift[psi] + sum_c noise_couplings[(psi, c)] * xi_c`` with
    ``c = (i, 0)`` for ``xi_i^x`` and ``c = (i, 1)`` for ``xi_i^y``; Stratonovich
    interpretation. Boson variables are the amplitudes ``a_m``; their
    conjugates follow by complex conjugation.
    """

    spec: ModelSpec
    variables: list
    drift: dict
    noise_couplings: dict
    dissipation: DissipationFactor

    def rhs(self, var: Variable) -> ClassicalExpr:
        """Full right-hand side with noise components as symbols."""
        out = self.drift[var]
        for (v, (i, ax)), coupling in self.noise_couplings.items():
            if v == var:
                out = out + coupling * noise(i, ax)
        return out

    def without_noise(self) -> "LangevinSystem":
        """Same drift with every noise coupling removed (deterministic trajectories)."""
        return replace(self, noise_couplings={})

    def noise_columns(self) -> list:
        return [(i, ax) for i in range(self.spec.n_jumps) for ax in (0, 1)]

    def spin_length_residuals(self, site: int) -> dict:
        """``sum_a s^a * (d s^a/dt)`` for the drift and each noise column."""
        s = [Variable(SPIN, site, ax) for ax in range(3)]
        out = {"drift": ClassicalExpr()}
        for ax, v in enumerate(s):
            out["drift"] = out["drift"] + self.drift[v] * ClassicalExpr({(v,): 1.0})
        for col in self.noise_columns():
            acc = ClassicalExpr()
            for v in s:
                c = self.noise_couplings.get((v, col))
                if c is not None:
                    acc = acc + c * ClassicalExpr({(v,): 1.0})
            out[col] = acc
        return out

    def dump_text(self) -> str:
        lines = [f"# model: {self.spec.name}"]
        for v in self.variables:
            terms = [str(self.drift[v])]
            for (i, ax) in self.noise_columns():
                c = self.noise_couplings.get((v, (i, ax)))
                if c is not None and not c.is_zero():
                    terms.append(f"({c})*xi{'xy'[ax]}{i}")
            lines.append(f"d{v}/dt = " + " + ".join(terms))
        if self.spec.n_jumps:
            lines.append("# noise: <xi_i^a xi_j^b> = Gamma_ij delta_ab delta(t-t')")
            lines.append(
                "# Gamma eigenvalues: "
                + ", ".join(f"{w:.12g}" for w in self.dissipation.eigenvalues)
            )
        return "\n".join(lines)

    def to_json(self) -> str:
        payload = {
            "model": self.spec.name,
            "variables": [str(v) for v in self.variables],
            "drift": {str(v): str(self.drift[v]) for v in self.variables},
            "noise_couplings": {
                f"{v}|xi{'xy'[ax]}{i}": str(c)
                for (v, (i, ax)), c in self.noise_couplings.items()
                if not c.is_zero()
            },
            "gamma_eigenvalues": [float(w) for w in self.dissipation.eigenvalues],
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @cached_property
    def compiled(self):
        from .kernel import CompiledSystem

        return CompiledSystem(self)


def _substitution_map(spec: ModelSpec) -> dict:
    gamma = spec.gamma
    mapping = {}
    for i in range(spec.n_jumps):
        phi = ClassicalExpr()
        phibar = ClassicalExpr()
        for j, lj in enumerate(spec.jumps):
            g = complex(gamma[i, j])
            if g != 0:
                phi = phi + lj * (0.5 * g)
                phibar = phibar + lj.conjugate() * (0.5 * g.conjugate())
        xi = noise(i, 0) * 0.5 + noise(i, 1) * 0.5j
        mapping[Variable(AUX, i)] = phi + xi
        mapping[Variable(AUX_CONJ, i)] = phibar + xi.conjugate()
    return mapping


def effective_hamiltonian(spec: ModelSpec) -> ClassicalExpr:
    """``H - i sum_i (conj(L_i) phi_i - conj(phi_i) L_i)`` with inert ``phi_i``."""
    h = spec.hamiltonian
    for i, li in enumerate(spec.jumps):
        h = h - 1j * (li.conjugate() * aux(i) - aux_conj(i) * li)
    return h


def _real_function(e: ClassicalExpr) -> ClassicalExpr:
    return ((e + e.conjugate()) * 0.5).chop(0.0)


def build_langevin(spec: ModelSpec) -> LangevinSystem:
    """Derive the Langevin system for ``spec``.

    Brackets are taken with the auxiliary fields frozen; the fields are
    substituted afterwards. Spin right-hand sides are returned as real
    polynomials.
    """
    factor = factor_dissipation(spec.gamma)
    h_eff = effective_hamiltonian(spec)
    mapping = _substitution_map(spec)
    scale = max(spec.rate_scale(), 1.0)
    chop_tol = 1e-13 * scale

    diag = np.abs(np.diag(spec.gamma)) if spec.n_jumps else np.zeros(0)
    silent = [bool(d <= EIG_TOL * max(diag.max(initial=0.0), 1.0)) for d in diag]
    drift, couplings = {}, {}
    variables = spec.dynamical_variables()
    for var in variables:
        psi = ClassicalExpr({(var,): 1.0})
        rhs = poisson_bracket(psi, h_eff).substitute(mapping).chop(chop_tol)
        noise_vars = sorted(v for v in rhs.variables() if v.kind == NOISE)
        d = rhs.substitute({v: 0.0 for v in noise_vars}) if noise_vars else rhs
        # a channel with Gamma_ii = 0 has an all-zero row (PSD) and carries no noise
        cols = {(v.index, v.axis): rhs.diff(v) for v in noise_vars if silent[v.index] is False}
        if var.kind == SPIN:
            # real-valued as functions: invariant under conjugation (a <-> abar)
            for name, e in [("drift", d), *cols.items()]:
                if (e - e.conjugate()).max_abs_coefficient() > 1e-9 * scale:
                    raise ValueError(f"spin equation for {var} ({name}) is not real")
            d = _real_function(d)
            cols = {c: _real_function(e) for c, e in cols.items()}
        drift[var] = d
        for c, e in cols.items():
            if not e.is_zero():
                couplings[(var, c)] = e
    return LangevinSystem(spec, variables, drift, couplings, factor)
