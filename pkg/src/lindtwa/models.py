"""Model constructors.

Every builder returns a :class:`~lindtwa.langevin.ModelSpec` whose classical
Hamiltonian and jump variables are written with ``s^{+-} = (s^x +- i s^y)/2``.
Jumps with zero rate are omitted. Spins are sites ``0..N-1`` except in the
central-spin model, where site 0 is the central spin and the satellites are
sites ``1..N``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .algebra import ClassicalExpr, boson, boson_conj, const, expr_sum, splus, sminus, sx, sz
from .errors import AboveCritical, ConfigError, ZeroDisplacement
from .langevin import ModelSpec
from .sampling import CONTINUOUS, DISCRETE, SamplerSpec, SpinInit

__all__ = [
    "DrivenSpinParams",
    "TavisCummingsParams",
    "CentralSpinParams",
    "RydbergChainParams",
    "AtomArrayParams",
    "build_driven_spin",
    "build_tavis_cummings",
    "build_central_spin",
    "build_rydberg_chain",
    "build_atom_array",
    "green_tensor",
    "atom_array_matrices",
    "quantum_correction_estimate",
    "critical_rabi",
    "MODELS",
    "build_model",
    "params_from_dict",
    "initial_state",
    "INITIAL_STATES",
    "expected_regime",
]


def _nonneg(obj, *names):
    for name in names:
        v = getattr(obj, name)
        if v is None:
            continue
        vals = v if isinstance(v, (tuple, list)) else [v]
        for x in vals:
            if not x >= 0:
                raise ValueError(f"{name} must be non-negative, got {x}")


def _tuple_or_none(obj, name, n):
    v = getattr(obj, name)
    if v is None:
        return
    v = tuple(float(x) for x in v)
    if len(v) != n:
        raise ValueError(f"{name} must have {n} entries, got {len(v)}")
    object.__setattr__(obj, name, v)


@dataclass(frozen=True)
class DrivenSpinParams:
    """Single spin ``H = Omega s^x`` with loss and pump.

    With ``rescale_decay`` the loss rate becomes ``gamma_down / 2S`` so that
    the normalised variables ``s / 2S`` obey S-independent drift.
    """

    omega: float
    gamma_down: float = 0.0
    gamma_up: float = 0.0
    spin_size: float = 0.5
    rescale_decay: bool = False

    def __post_init__(self):
        _nonneg(self, "gamma_down", "gamma_up")
        if self.spin_size <= 0 or abs(2 * self.spin_size - round(2 * self.spin_size)) > 1e-12:
            raise ValueError("spin_size must be a positive half-integer")


@dataclass(frozen=True)
class TavisCummingsParams:
    """N two-level atoms coupled to one cavity mode."""

    n: int
    omega: float
    epsilon: float
    g: float
    kappa: float = 0.0
    gamma_down: float = 0.0
    gamma_up: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        _nonneg(self, "kappa", "gamma_down", "gamma_up")


@dataclass(frozen=True)
class CentralSpinParams:
    """One central spin coupled to N satellites; optional per-satellite lists."""

    n: int
    omega: float
    epsilon: float
    g: float
    kappa: float = 0.0
    gamma_down: float = 0.0
    gamma_up: float = 0.0
    epsilons: tuple | None = None
    gs: tuple | None = None
    gammas_down: tuple | None = None
    gammas_up: tuple | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        for name in ("epsilons", "gs", "gammas_down", "gammas_up"):
            _tuple_or_none(self, name, self.n)
        _nonneg(self, "kappa", "gamma_down", "gamma_up", "gammas_down", "gammas_up")

    def site_values(self, name: str) -> tuple:
        lists = {"epsilon": "epsilons", "g": "gs", "gamma_down": "gammas_down",
                 "gamma_up": "gammas_up"}
        v = getattr(self, lists[name])
        return v if v is not None else (float(getattr(self, name)),) * self.n


@dataclass(frozen=True)
class RydbergChainParams:
    """Periodic Ising chain ``Omega sum s^x + J/4 sum (1+s^z_i)(1+s^z_{i+1})``."""

    n: int
    omega: float
    j: float
    kappa: float = 0.0
    gamma_down: float = 0.0
    boundary: str = "periodic"

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.boundary not in ("periodic", "open"):
            raise ValueError("boundary must be 'periodic' or 'open'")
        _nonneg(self, "kappa", "gamma_down")


@dataclass(frozen=True)
class AtomArrayParams:
    """Chain of emitters along x with free-space dipolar couplings.

    Lengths are in units of ``wavelength``; rates in units of the
    single-emitter rate, which is normalised to 1. ``dipole`` is the
    orientation of the transition dipole (perpendicular to the chain by
    default); ``omega_z`` is the detuning, a free parameter.
    """

    n: int
    spacing: float
    wavelength: float = 1.0
    dipole: tuple = (0.0, 0.0, 1.0)
    omega_z: float = 0.0
    omega: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")
        if not self.wavelength > 0:
            raise ValueError("wavelength must be positive")
        p = tuple(complex(x) for x in self.dipole)
        if len(p) != 3 or abs(np.linalg.norm(p) - 1.0) > 1e-12:
            raise ValueError("dipole must be a unit 3-vector")
        if all(x.imag == 0 for x in p):
            p = tuple(x.real for x in p)
        object.__setattr__(self, "dipole", p)


def _diag(rates):
    return np.diag(np.asarray(rates, dtype=float))


def build_driven_spin(params: DrivenSpinParams) -> ModelSpec:
    """Driven spin with loss ``s^-`` and pump ``s^+``."""
    p = params
    s = p.spin_size
    down = p.gamma_down / (2 * s) if p.rescale_decay else p.gamma_down
    jumps, rates = [], []
    if down > 0:
        jumps.append(sminus(0))
        rates.append(down)
    if p.gamma_up > 0:
        jumps.append(splus(0))
        rates.append(p.gamma_up)
    info = {"params": dataclasses.asdict(p), "effective_gamma_down": down}
    return ModelSpec(1, p.omega * sx(0), jumps, _diag(rates), spin_sizes=(s,),
                     name="driven_spin", info=info)


def build_tavis_cummings(params: TavisCummingsParams) -> ModelSpec:
    """Cavity mode ``a`` (boson 0) and atoms ``0..N-1``; jumps ``a``, ``s_i^-``, ``s_i^+``."""
    p = params
    c = p.g / math.sqrt(p.n)
    a, abar = boson(0), boson_conj(0)
    h = p.omega * abar * a
    for i in range(p.n):
        h = h + (p.epsilon / 2) * sz(i) + c * (abar * sminus(i) + a * splus(i))
    jumps, rates = [], []
    if p.kappa > 0:
        jumps.append(a)
        rates.append(p.kappa)
    for rate, op in ((p.gamma_down, sminus), (p.gamma_up, splus)):
        if rate > 0:
            for i in range(p.n):
                jumps.append(op(i))
                rates.append(rate)
    return ModelSpec(p.n, h, jumps, _diag(rates), n_bosons=1, name="tavis_cummings",
                     info={"params": dataclasses.asdict(p)})


def build_central_spin(params: CentralSpinParams) -> ModelSpec:
    """Central spin at site 0, satellites at ``1..N``."""
    p = params
    eps = p.site_values("epsilon")
    gs = p.site_values("g")
    down = p.site_values("gamma_down")
    up = p.site_values("gamma_up")
    root = math.sqrt(p.n)
    h = (p.omega / 2) * sz(0)
    for i in range(p.n):
        k = i + 1
        h = h + (eps[i] / 2) * sz(k) + (gs[i] / root) * (splus(0) * sminus(k) + sminus(0) * splus(k))
    jumps, rates = [], []
    if p.kappa > 0:
        jumps.append(sminus(0))
        rates.append(p.kappa)
    for i in range(p.n):
        if down[i] > 0:
            jumps.append(sminus(i + 1))
            rates.append(down[i])
    for i in range(p.n):
        if up[i] > 0:
            jumps.append(splus(i + 1))
            rates.append(up[i])
    return ModelSpec(p.n + 1, h, jumps, _diag(rates), name="central_spin",
                     info={"params": dataclasses.asdict(p)})


def build_rydberg_chain(params: RydbergChainParams) -> ModelSpec:
    """Ising chain with dephasing ``s_i^z`` and loss ``s_i^-`` on every site."""
    p = params
    h = ClassicalExpr()
    for i in range(p.n):
        h = h + p.omega * sx(i)
    bonds = p.n if p.boundary == "periodic" else p.n - 1
    for i in range(bonds):
        j = (i + 1) % p.n
        h = h + (p.j / 4) * (const(1.0) + sz(i)) * (const(1.0) + sz(j))
    jumps, rates = [], []
    if p.kappa > 0:
        for i in range(p.n):
            jumps.append(sz(i))
            rates.append(p.kappa)
    if p.gamma_down > 0:
        for i in range(p.n):
            jumps.append(sminus(i))
            rates.append(p.gamma_down)
    return ModelSpec(p.n, h, jumps, _diag(rates), name="rydberg_chain",
                     info={"params": dataclasses.asdict(p)})


def green_tensor(r, k: float, mu0: float = 1.0) -> np.ndarray:
    """Free-space dyadic Green's function ``G0(r, omega)`` with ``k = omega/c``.

    Raises
    ------
    ZeroDisplacement
        If ``r`` is the zero vector.
    """
    r = np.asarray(r, dtype=float)
    dist = float(np.linalg.norm(r))
    if dist == 0.0:
        raise ZeroDisplacement("Green's tensor is singular at zero displacement")
    u = r / dist
    kr = k * dist
    pref = mu0 * np.exp(1j * kr) / (4 * np.pi * k ** 2 * dist ** 3)
    return pref * ((kr ** 2 + 1j * kr - 1) * np.eye(3) + (3 - 3j * kr - kr ** 2) * np.outer(u, u))


def atom_array_matrices(params: AtomArrayParams) -> tuple[np.ndarray, np.ndarray]:
    """Coherent couplings ``J`` and dissipation matrix ``Gamma`` of a chain.

    Uses ``c = 1``, ``mu0 = 1``, ``omega = k = 2 pi / wavelength`` and a dipole
    norm fixed so that the single-emitter rate is 1. Diagonals: ``Gamma_ii = 1``
    and ``J_ii = 0`` (self-energy absorbed into ``omega_z``).
    """
    p = params
    k = 2 * np.pi / p.wavelength
    pvec = np.asarray(p.dipole, dtype=complex) * math.sqrt(3 * np.pi / k ** 3)
    pos = np.arange(p.n)[:, None] * p.spacing * np.array([1.0, 0.0, 0.0])
    J = np.zeros((p.n, p.n))
    G = np.zeros((p.n, p.n), dtype=complex)
    for i in range(p.n):
        for j in range(p.n):
            if i == j:
                continue
            g = green_tensor(pos[i] - pos[j], k)
            J[i, j] = (-k ** 2 * (pvec.conj() @ g.real @ pvec)).real
            G[i, j] = 2 * k ** 2 * (pvec.conj() @ g.imag @ pvec)
    G[np.diag_indices(p.n)] = 1.0
    if np.all(np.abs(G.imag) < 1e-15):
        G = G.real.copy()
    return J, G


def build_atom_array(params: AtomArrayParams) -> ModelSpec:
    """Driven chain with correlated decay; jump ``i`` is ``s_i^-``."""
    p = params
    J, G = atom_array_matrices(p)
    terms = [p.omega_z * sz(i) + p.omega * sx(i) for i in range(p.n)]
    terms += [J[i, j] * splus(i) * sminus(j)
              for i in range(p.n) for j in range(p.n) if i != j and J[i, j] != 0]
    h = expr_sum(terms)
    jumps = [sminus(i) for i in range(p.n)]
    info = {"params": dataclasses.asdict(p), "gamma0": 1.0, "J": J.tolist()}
    return ModelSpec(p.n, h, jumps, G, name="atom_array", info=info)


def critical_rabi(gamma_down: float) -> float:
    """Drive ``gamma_down / 4`` above which the large-spin steady state stops existing."""
    return gamma_down / 4.0


def quantum_correction_estimate(spin_size: float, omega: float, gamma_down: float) -> float:
    """First-order noise correction to the steady variance of ``s^x / 2S``.

    ``(1/2S) sqrt(1 - (Omega/Omega_c)^2)`` with ``Omega_c = gamma_down / 4``,
    for the driven spin with rescaled decay.

    Raises
    ------
    AboveCritical
        If ``omega >= Omega_c``.
    """
    oc = critical_rabi(gamma_down)
    if not 0 <= omega < oc:
        raise AboveCritical(f"Omega = {omega} is not in [0, Omega_c = {oc})")
    return math.sqrt(1.0 - (omega / oc) ** 2) / (2.0 * spin_size)


# -- registry ----------------------------------------------------------------


@dataclass(frozen=True)
class _Entry:
    params: type
    build: object
    default_state: str


MODELS = {
    "driven_spin": _Entry(DrivenSpinParams, build_driven_spin, "all_down"),
    "tavis_cummings": _Entry(TavisCummingsParams, build_tavis_cummings, "all_up"),
    "central_spin": _Entry(CentralSpinParams, build_central_spin, "central_down_satellites_up"),
    "rydberg_chain": _Entry(RydbergChainParams, build_rydberg_chain, "all_down"),
    "atom_array": _Entry(AtomArrayParams, build_atom_array, "all_up"),
}


def params_from_dict(model: str, data: dict):
    """Validate a parameter table against a model's schema.

    Raises
    ------
    ConfigError
        Naming the offending field for unknown models, missing or unknown
        parameters and out-of-range values.
    """
    if model not in MODELS:
        raise ConfigError(f"unknown model {model!r}; choose from {sorted(MODELS)}", field="model")
    cls = MODELS[model].params
    fields = {f.name: f for f in dataclasses.fields(cls)}
    for key in data:
        if key not in fields:
            raise ConfigError(f"unknown parameter {key!r} for model {model!r}", field=f"params.{key}")
    for name, f in fields.items():
        required = f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING
        if required and name not in data:
            raise ConfigError(f"missing required parameter {name!r} for model {model!r}",
                              field=f"params.{name}")
    kwargs = {}
    for key, value in data.items():
        if isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        text = str(exc)
        first = text.split()[0] if text else ""
        name = first if first in fields else None
        raise ConfigError(f"invalid parameters for {model!r}: {text}",
                          field=f"params.{name}" if name else "params") from exc


def build_model(model: str, params) -> ModelSpec:
    if isinstance(params, dict):
        params = params_from_dict(model, params)
    return MODELS[model].build(params)


def _uniform(spec, n, scheme):
    sizes = spec.spin_sizes
    schemes = [scheme if s == 0.5 else CONTINUOUS for s in sizes]
    spins = tuple(SpinInit(n, s, sch) for s, sch in zip(sizes, schemes))
    return SamplerSpec(spins, (0j,) * spec.n_bosons)


def _all_down(spec, scheme):
    return _uniform(spec, (0.0, 0.0, -1.0), scheme)


def _all_up(spec, scheme):
    return _uniform(spec, (0.0, 0.0, 1.0), scheme)


def _central_down(spec, scheme):
    base = _all_up(spec, scheme)
    first = SpinInit((0.0, 0.0, -1.0), base.spins[0].spin_size, base.spins[0].scheme)
    return SamplerSpec((first,) + base.spins[1:], base.bosons)


INITIAL_STATES = {
    "all_down": _all_down,
    "all_up": _all_up,
    "central_down_satellites_up": _central_down,
}


def initial_state(name: str, spec: ModelSpec, scheme: str = DISCRETE) -> SamplerSpec:
    """Named product initial state; boson modes start in the vacuum.

    ``all_up`` with a cavity is the photon vacuum with inverted atoms. Spins
    larger than 1/2 always use continuous sampling.
    """
    if name not in INITIAL_STATES:
        raise ConfigError(f"unknown initial state {name!r}; choose from {sorted(INITIAL_STATES)}",
                          field="initial.state")
    return INITIAL_STATES[name](spec, scheme)


def expected_regime(model: str, params) -> str:
    """``"reliable"`` or ``"expected-fail"`` for the driven spin, else ``"unknown"``.

    Loss much faster than the drive (``gamma_down > 2 Omega``) is the
    documented regime where the truncated dynamics misses the steady state.
    """
    if model != "driven_spin":
        return "unknown"
    if isinstance(params, dict):
        params = params_from_dict(model, params)
    if params.omega == 0 or params.gamma_down > 2 * abs(params.omega):
        return "expected-fail"
    return "reliable"
