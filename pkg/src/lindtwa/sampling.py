"""Wigner sampling of product initial states.

Spins are sampled either from the discrete four-point distribution (spin-1/2
only) or from the continuous distribution
``P(s) ~ exp(-s_perp^2 / 4S) delta(s.n - 2S)``. Boson modes start in coherent
states with symmetric-ordering vacuum noise of variance 1/4 per quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SpinInit",
    "SamplerSpec",
    "transverse_frame",
    "sample_discrete",
    "sample_continuous",
    "sample_boson_coherent",
]

DISCRETE = "discrete"
CONTINUOUS = "continuous"


def transverse_frame(n) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Deterministic right-handed orthonormal frame ``(e1, e2, n)``."""
    n = np.asarray(n, dtype=float)
    norm = np.linalg.norm(n)
    if abs(norm - 1.0) > 1e-12:
        raise ValueError(f"orientation must be a unit vector, |n| = {norm}")
    ref = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(n, ref)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    return e1, e2, n


def sample_discrete(n, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Discrete spin-1/2 Wigner sample(s) for the state polarised along ``n``.

    The component along ``n`` is +1; the two transverse components are
    independently +-1. Returns shape ``(3,)`` or ``(3, size)``.
    """
    e1, e2, n = transverse_frame(n)
    m = 1 if size is None else size
    signs = rng.integers(0, 2, size=(2, m)) * 2.0 - 1.0
    out = n[:, None] + e1[:, None] * signs[0] + e2[:, None] * signs[1]
    return out[:, 0] if size is None else out


def sample_continuous(n, spin_size: float, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Continuous Wigner sample(s): ``s.n = 2S``, transverse Gaussians of variance ``2S``."""
    e1, e2, n = transverse_frame(n)
    m = 1 if size is None else size
    g = rng.standard_normal((2, m)) * np.sqrt(2.0 * spin_size)
    out = 2.0 * spin_size * n[:, None] + e1[:, None] * g[0] + e2[:, None] * g[1]
    return out[:, 0] if size is None else out


def sample_boson_coherent(alpha: complex, rng: np.random.Generator, size: int | None = None):
    """Coherent-state Wigner sample(s): ``alpha + zeta`` with ``Var Re = Var Im = 1/4``."""
    m = 1 if size is None else size
    z = rng.standard_normal((2, m)) * 0.5
    out = complex(alpha) + z[0] + 1j * z[1]
    return out[0] if size is None else out


@dataclass(frozen=True)
class SpinInit:
    """Initial product-state factor for one spin."""

    n: tuple = (0.0, 0.0, -1.0)
    spin_size: float = 0.5
    scheme: str = DISCRETE

    def __post_init__(self):
        n = tuple(float(x) for x in self.n)
        object.__setattr__(self, "n", n)
        if abs(np.linalg.norm(n) - 1.0) > 1e-12:
            raise ValueError(f"orientation {n} is not a unit vector")
        if self.scheme not in (DISCRETE, CONTINUOUS):
            raise ValueError(f"unknown sampling scheme {self.scheme!r}")
        if self.scheme == DISCRETE and self.spin_size != 0.5:
            raise ValueError("discrete sampling requires spin size 1/2")


@dataclass(frozen=True)
class SamplerSpec:
    """Per-site spin initialisation and per-mode coherent amplitudes."""

    spins: tuple = ()
    bosons: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "spins", tuple(self.spins))
        object.__setattr__(self, "bosons", tuple(complex(a) for a in self.bosons))

    @classmethod
    def uniform(cls, n_spins: int, n=(0.0, 0.0, -1.0), scheme=DISCRETE, spin_size=0.5,
                bosons=()) -> "SamplerSpec":
        return cls(tuple(SpinInit(n, spin_size, scheme) for _ in range(n_spins)), bosons)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` initial states in the batch layout ``(n_rows, size)``."""
        n_s, n_b = len(self.spins), len(self.bosons)
        dtype = np.complex128 if n_b else np.float64
        out = np.empty((3 * n_s + n_b, size), dtype=dtype)
        for k, init in enumerate(self.spins):
            if init.scheme == DISCRETE:
                out[3 * k:3 * k + 3] = sample_discrete(init.n, rng, size)
            else:
                out[3 * k:3 * k + 3] = sample_continuous(init.n, init.spin_size, rng, size)
        for m, alpha in enumerate(self.bosons):
            out[3 * n_s + m] = sample_boson_coherent(alpha, rng, size)
        return out

    def to_dict(self) -> dict:
        return {
            "spins": [
                {"n": list(s.n), "spin_size": s.spin_size, "scheme": s.scheme} for s in self.spins
            ],
            "bosons": [[a.real, a.imag] for a in self.bosons],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SamplerSpec":
        spins = tuple(
            SpinInit(tuple(s.get("n", (0, 0, -1))), float(s.get("spin_size", 0.5)),
                     s.get("scheme", DISCRETE))
            for s in data.get("spins", ())
        )
        bosons = tuple(complex(*b) if isinstance(b, (list, tuple)) else complex(b)
                       for b in data.get("bosons", ()))
        return cls(spins, bosons)
