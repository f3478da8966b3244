"""Exact Lindblad evolution for small systems.

Classical expressions are lifted to operators with ``s^a -> sigma^a`` and
``a, abar -> a, a^dagger`` (products of one mode symmetrised, i.e. Weyl
ordered, which is the correspondence the phase-space averages estimate). The
master equation

    d rho/dt = -i [H, rho] + sum_ij Gamma_ji ( L_i rho L_j^dag - 1/2 {L_j^dag L_i, rho} )

is integrated with classical fourth-order Runge-Kutta at a fixed step on the
dense density matrix. No trace renormalisation is applied.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .algebra import BOSON, BOSON_CONJ, SPIN, ClassicalExpr
from .errors import CutoffTooSmall, HilbertSpaceTooLarge, OrderingAmbiguity, TraceDrift

__all__ = [
    "HilbertLayout",
    "MAX_DIMENSION",
    "lift",
    "build_operators",
    "product_state",
    "observable_operator",
    "evolve",
    "OracleResult",
    "run_oracle",
]

MAX_DIMENSION = 16384
TRACE_LIMIT = 1e-6
SUPER_NNZ_LIMIT = 40_000_000
# RK4 step as a fraction of 1 / (generator spectral radius)
DT_SCALE = 0.04
MAX_WEYL_DEGREE = 8

_SIGMA = {
    0: sp.csr_matrix(np.array([[0, 1], [1, 0]], dtype=complex)),
    1: sp.csr_matrix(np.array([[0, -1j], [1j, 0]], dtype=complex)),
    2: sp.csr_matrix(np.array([[1, 0], [0, -1]], dtype=complex)),
}


@dataclass(frozen=True)
class HilbertLayout:
    """Spin-1/2 sites (first, site 0 most significant) then truncated modes.

    Mode ``m`` keeps Fock states ``0..n_max[m]``.
    """

    n_spins: int
    n_max: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "n_max", tuple(int(n) for n in self.n_max))
        if any(n < 1 for n in self.n_max):
            raise ValueError("boson cutoffs must be >= 1")
        if self.dim > MAX_DIMENSION:
            raise HilbertSpaceTooLarge(
                f"Hilbert-space dimension {self.dim} exceeds the cap {MAX_DIMENSION}"
            )

    @property
    def dims(self) -> tuple:
        return (2,) * self.n_spins + tuple(n + 1 for n in self.n_max)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64)) if self.dims else 1

    def embed(self, slot: int, op) -> sp.csr_matrix:
        """Operator acting on factor ``slot`` (spins first, then modes)."""
        out = sp.identity(1, dtype=complex, format="csr")
        for k, d in enumerate(self.dims):
            out = sp.kron(out, op if k == slot else sp.identity(d, dtype=complex), format="csr")
        return out

    def sigma(self, site: int, axis: int) -> sp.csr_matrix:
        return self.embed(site, _SIGMA[axis])

    def annihilation(self, mode: int) -> sp.csr_matrix:
        n = self.n_max[mode]
        a = sp.diags(np.sqrt(np.arange(1, n + 1, dtype=float)), 1, format="csr").astype(complex)
        return self.embed(self.n_spins + mode, a)


def _weyl(word, a, adag):
    """Symmetrised product of the given sequence of boson factors on one mode."""
    if len(word) > MAX_WEYL_DEGREE:
        raise OrderingAmbiguity("boson monomial degree too high for symmetric lifting")
    perms = set(itertools.permutations(word))
    acc = None
    for perm in perms:
        prod = None
        for f in perm:
            m = a if f == BOSON else adag
            prod = m if prod is None else prod @ m
        acc = prod if acc is None else acc + prod
    return acc / len(perms)


def lift(expr: ClassicalExpr, layout: HilbertLayout) -> sp.csr_matrix:
    """Operator image of a classical polynomial.

    Raises
    ------
    OrderingAmbiguity
        If a monomial contains more than one factor of the same spin.
    """
    dim = layout.dim
    out = sp.csr_matrix((dim, dim), dtype=complex)
    ident = sp.identity(dim, dtype=complex, format="csr")
    for key, coef in expr.items():
        spins, modes = {}, {}
        for v in key:
            if v.kind == SPIN:
                if v.index in spins:
                    raise OrderingAmbiguity(
                        f"monomial {key} has repeated factors on spin {v.index}"
                    )
                if v.index >= layout.n_spins:
                    raise ValueError(f"spin {v.index} outside the layout")
                spins[v.index] = v.axis
            elif v.kind in (BOSON, BOSON_CONJ):
                if v.index >= len(layout.n_max):
                    raise ValueError(f"mode {v.index} outside the layout")
                modes.setdefault(v.index, []).append(v.kind)
            else:
                raise ValueError(f"variable {v} has no operator image")
        term = ident
        for site, axis in spins.items():
            term = term @ layout.sigma(site, axis)
        for mode, word in modes.items():
            a = layout.annihilation(mode)
            term = term @ _weyl(word, a, a.conj().T.tocsr())
        out = out + complex(coef) * term
    return out.tocsr()


def build_operators(spec, layout: HilbertLayout):
    """Lift a model to ``(H, [L_i])``.

    Raises
    ------
    ValueError
        If the layout does not match the model or a spin is larger than 1/2.
    """
    if layout.n_spins != spec.n_spins or len(layout.n_max) != spec.n_bosons:
        raise ValueError("layout does not match the model")
    if any(s != 0.5 for s in spec.spin_sizes):
        raise ValueError("exact solver supports spin-1/2 only")
    h = lift(spec.hamiltonian, layout)
    herm = abs(h - h.conj().T)
    if herm.nnz and herm.max() > 1e-10 * max(abs(h).max(), 1.0):
        raise ValueError("lifted Hamiltonian is not Hermitian")
    jumps = [lift(j, layout) for j in spec.jumps]
    return h, jumps


def _spin_ket(n) -> np.ndarray:
    nx, ny, nz = n
    theta = math.acos(max(-1.0, min(1.0, nz)))
    phi = math.atan2(ny, nx)
    return np.array([math.cos(theta / 2), np.exp(1j * phi) * math.sin(theta / 2)])


def _coherent_ket(alpha: complex, n_max: int) -> np.ndarray:
    k = np.arange(n_max + 1)
    logfact = np.array([math.lgamma(x + 1) for x in k])
    amp = np.exp(-abs(alpha) ** 2 / 2 - 0.5 * logfact) * np.power(complex(alpha), k)
    if alpha == 0:
        amp = np.zeros(n_max + 1, dtype=complex)
        amp[0] = 1.0
    tail = 1.0 - np.sum(np.abs(amp[: max(n_max - 1, 0)]) ** 2)
    if tail > 1e-6:
        warnings.warn(f"coherent amplitude {alpha} has weight {tail:.2e} beyond n_max - 2",
                      CutoffTooSmall, stacklevel=3)
    return amp / np.linalg.norm(amp)


def product_state(sampler, layout: HilbertLayout) -> np.ndarray:
    """Density matrix of the pure product state a sampler describes."""
    psi = np.ones(1, dtype=complex)
    for init in sampler.spins:
        if init.spin_size != 0.5:
            raise ValueError("exact solver supports spin-1/2 only")
        psi = np.kron(psi, _spin_ket(init.n))
    for m, alpha in enumerate(sampler.bosons):
        psi = np.kron(psi, _coherent_ket(alpha, layout.n_max[m]))
    return np.outer(psi, psi.conj())


def observable_operator(obs, spec, layout: HilbertLayout) -> tuple[sp.csr_matrix, float]:
    """``(operator, constant)`` whose expectation plus constant matches ``obs``."""
    from . import ensemble as ens

    ident = sp.identity(layout.dim, dtype=complex, format="csr")
    if isinstance(obs, ens.SpinExpectation):
        return layout.sigma(obs.site, ens._axis(obs.axis)), 0.0
    if isinstance(obs, ens.SymmetricTwoPoint):
        a = layout.sigma(obs.site1, ens._axis(obs.axis1))
        b = layout.sigma(obs.site2, ens._axis(obs.axis2))
        return 0.5 * (a @ b + b @ a), 0.0
    if isinstance(obs, ens.PhotonNumber):
        a = layout.annihilation(obs.mode)
        return a.conj().T @ a, 0.0
    if isinstance(obs, ens.CentralPopulation):
        return 0.5 * (ident + layout.sigma(obs.site, 2)), 0.0
    if isinstance(obs, ens.MeanExcitation):
        n = spec.n_spins
        acc = sum(layout.sigma(i, 2) for i in range(n))
        return 0.5 * (ident + acc / n), 0.0
    if isinstance(obs, ens.EmissionRate):
        sites = ens._emission_sites(spec)
        g0 = obs.gamma0 if obs.gamma0 is not None else spec.info.get("gamma0", 1.0)
        lower = [0.5 * (layout.sigma(s, 0) - 1j * layout.sigma(s, 1)) for s in sites]
        acc = sp.csr_matrix((layout.dim, layout.dim), dtype=complex)
        for i, li in enumerate(lower):
            for j, lj in enumerate(lower):
                if spec.gamma[i, j] != 0:
                    acc = acc + spec.gamma[i, j] * (li.conj().T @ lj)
        return acc / (len(sites) * g0), 0.0
    if isinstance(obs, ens.CustomExpr):
        return lift(obs.expr, layout), float(obs.ordering_correction)
    raise TypeError(f"no operator form for observable {obs!r}")


class _Liouvillian:
    def __init__(self, h, jumps, gamma):
        gamma = np.atleast_2d(np.asarray(gamma)) if len(jumps) else np.zeros((0, 0))
        self.jumps = jumps
        # M_i^dag = sum_j Gamma_ji L_j^dag
        self.mdag = []
        k = sp.csr_matrix(h.shape, dtype=complex)
        for i, li in enumerate(jumps):
            m = sp.csr_matrix(h.shape, dtype=complex)
            for j, lj in enumerate(jumps):
                if gamma[j, i] != 0:
                    m = m + complex(gamma[j, i]) * lj.conj().T
            m = m.tocsr()
            self.mdag.append(m)
            k = k + m @ li
        self.heff = (h - 0.5j * k).tocsr()
        self.heff_dag = self.heff.conj().T.tocsr()
        pairs = [(li, m) for li, m in zip(jumps, self.mdag) if m.nnz and li.nnz]
        self.pairs = pairs
        self.norm_bound = 2 * _norm1(self.heff) + sum(_norm1(li) * _norm1(m) for li, m in pairs)
        self.dim = h.shape[0]
        self.super = self._superoperator() if self._super_size() <= SUPER_NNZ_LIMIT else None

    def _super_size(self) -> int:
        d = self.dim
        return 2 * self.heff.nnz * d + sum(li.nnz * m.nnz for li, m in self.pairs)

    def _superoperator(self):
        # row-major vec: vec(A rho B) = (A kron B^T) vec(rho)
        eye = sp.identity(self.dim, dtype=complex, format="csr")
        s = -1j * sp.kron(self.heff, eye, format="csr")
        s = s + 1j * sp.kron(eye, self.heff_dag.T, format="csr")
        for li, m in self.pairs:
            s = s + sp.kron(li, m.T, format="csr")
        return s.tocsr()

    def spectral_radius(self) -> float:
        """Largest |eigenvalue| of the generator (falls back to the 1-norm bound)."""
        if self.super is None or self.dim < 4:
            return self.norm_bound
        from scipy.sparse.linalg import ArpackNoConvergence, eigs

        try:
            vals = eigs(self.super, k=1, which="LM", return_eigenvectors=False,
                        tol=1e-3, maxiter=2000)
            return float(min(abs(vals[0]) * 1.05, self.norm_bound))
        except ArpackNoConvergence:
            return self.norm_bound

    def __call__(self, rho):
        if self.super is not None:
            return (self.super @ rho.ravel()).reshape(rho.shape)
        a = self.heff @ rho
        out = -1j * a
        rt = np.ascontiguousarray(rho.T)
        out += 1j * (self.heff_dag.T.tocsr() @ rt).T
        for li, m in self.pairs:
            out += (m.T.tocsr() @ np.ascontiguousarray((li @ rho).T)).T
        return out


def _norm1(m) -> float:
    if m.nnz == 0:
        return 0.0
    return float(abs(m).sum(axis=0).max())


@dataclass
class OracleResult:
    times: np.ndarray
    names: list
    values: np.ndarray
    max_trace_drift: float
    max_hermiticity: float
    min_eigenvalue: float
    final_rho: np.ndarray


def evolve(rho0, h, jumps, gamma, t_grid, observables: dict, dt: float | None = None,
           check_eigen: bool = True, dt_scale: float = DT_SCALE) -> OracleResult:
    """Integrate the master equation and record expectation values.

    Parameters
    ----------
    rho0 : ndarray
        Initial density matrix.
    h, jumps : sparse matrices
    gamma : ndarray
        Dissipation matrix (``gamma[j, i]`` multiplies ``L_i rho L_j^dag``).
    t_grid : array_like
        Increasing output times starting at 0.
    observables : dict
        ``name -> (operator, constant)``.
    dt : float, optional
        Maximum RK4 step. Defaults to ``dt_scale / r`` with ``r`` an estimate
        of the generator's spectral radius (the 1-norm bound for tiny spaces).
    dt_scale : float
        Step as a fraction of ``1 / r``.

    Raises
    ------
    TraceDrift
        If ``|Tr rho - 1|`` exceeds 1e-6.
    """
    rho = np.array(rho0, dtype=complex, copy=True)
    liou = _Liouvillian(h, jumps, gamma)
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid[0] != 0:
        raise ValueError("time grid must start at 0")
    if dt is None:
        dt = dt_scale / max(liou.spectral_radius(), 1e-12)
    names = list(observables)
    ops = [(observables[n][0].tocsr(), observables[n][1]) for n in names]
    values = np.zeros((len(t_grid), len(names)))
    drift = herm = 0.0
    min_eig = np.inf

    def measure(r):
        nonlocal drift, herm, min_eig
        for k, (op, c) in enumerate(ops):
            values[r, k] = float(np.real(np.sum(op.T.multiply(rho)))) + c
        drift = max(drift, abs(np.trace(rho).real - 1.0))
        herm = max(herm, float(np.abs(rho - rho.conj().T).max()))
        if check_eigen and rho.shape[0] <= 1024:
            min_eig = min(min_eig, float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]))
        if drift > TRACE_LIMIT:
            raise TraceDrift(f"trace drifted by {drift:.3e} at t={t_grid[r]:.6g}")

    measure(0)
    for r in range(1, len(t_grid)):
        span = t_grid[r] - t_grid[r - 1]
        n_sub = max(1, int(math.ceil(span / dt - 1e-9)))
        h_step = span / n_sub
        for _ in range(n_sub):
            k1 = liou(rho)
            k2 = liou(rho + 0.5 * h_step * k1)
            k3 = liou(rho + 0.5 * h_step * k2)
            k4 = liou(rho + h_step * k3)
            rho = rho + (h_step / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        measure(r)
    return OracleResult(t_grid, names, values, drift, herm, min_eig, rho)


def run_oracle(spec, sampler, t_grid, observables, n_max=(), dt: float | None = None,
               dt_scale: float = DT_SCALE):
    """Exact counterpart of :func:`lindtwa.ensemble.run_ensemble`.

    Returns an :class:`~lindtwa.ensemble.ObservableSeries` with zero
    standard errors; diagnostics go to ``info``.
    """
    from .ensemble import ObservableSeries

    layout = HilbertLayout(spec.n_spins, tuple(n_max))
    h, jumps = build_operators(spec, layout)
    rho0 = product_state(sampler, layout)
    ops = {o.label: observable_operator(o, spec, layout) for o in observables}
    res = evolve(rho0, h, jumps, spec.gamma, t_grid, ops, dt=dt, dt_scale=dt_scale)
    zeros = np.zeros_like(res.values)
    info = {"engine": "oracle", "dimension": int(layout.dim),
            "max_trace_drift": float(res.max_trace_drift),
            "max_hermiticity": float(res.max_hermiticity),
            "min_eigenvalue": float(res.min_eigenvalue)}
    return ObservableSeries(res.times, res.names, res.values, zeros,
                            np.ones(len(res.times), dtype=int), 1, 0, info)
