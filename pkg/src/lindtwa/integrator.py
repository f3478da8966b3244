"""Stratonovich implicit-midpoint integration of Langevin trajectories.

Each step solves ``x' = x + dt F((x + x')/2, xi)`` by fixed-point iteration
started from the explicit Euler predictor, with the noise ``xi`` held constant
over the step (variance ``Gamma / dt``). Spin right-hand sides always have the
form ``omega x s``; each spin iterate is therefore computed as the exact
solution of the linear midpoint equation ``s' = s + dt omega x (s + s')/2``
with ``omega = m x F(m) / |m|^2`` taken at the current midpoint estimate ``m``.
This is a rotation (Cayley transform), so every iterate keeps ``|s|`` fixed
and the fixed point coincides with the plain midpoint rule.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import NonFiniteState

__all__ = [
    "IntegratorConfig", "step", "select_backend", "integrate_batch", "integrate_trajectory",
]

RUNAWAY_FACTOR = 10.0


@dataclass(frozen=True)
class IntegratorConfig:
    """Time stepping parameters.

    ``dt=None`` resolves to ``1e-3 / rate_scale`` of the model.
    """

    t_final: float
    dt: float | None = None
    fixed_point_iters: int = 4
    fixed_point_tol: float = 1e-12
    output_stride: int = 1

    def __post_init__(self):
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.dt is not None and self.t_final < self.dt:
            raise ValueError("t_final must be at least dt")
        if self.fixed_point_iters < 2:
            raise ValueError("fixed_point_iters must be >= 2")
        if self.output_stride < 1:
            raise ValueError("output_stride must be >= 1")

    def resolve(self, spec) -> "IntegratorConfig":
        if self.dt is not None:
            return self
        scale = spec.rate_scale()
        dt = 1e-3 / scale if scale > 0 else 1e-3
        return IntegratorConfig(self.t_final, dt, self.fixed_point_iters,
                                self.fixed_point_tol, self.output_stride)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    def times(self) -> np.ndarray:
        idx = np.arange(0, self.n_steps + 1, self.output_stride)
        return idx * self.dt

    def to_dict(self) -> dict:
        return asdict(self)


def _cayley(s: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Solve ``s' = s + theta x (s + s')`` for ``s'``; arrays ``(n, 3, batch)``."""
    tx, ty, tz = theta[:, 0], theta[:, 1], theta[:, 2]
    sx, sy, sz = s[:, 0], s[:, 1], s[:, 2]
    cx = ty * sz - tz * sy
    cy = tz * sx - tx * sz
    cz = tx * sy - ty * sx
    ccx = ty * cz - tz * cy
    ccy = tz * cx - tx * cz
    ccz = tx * cy - ty * cx
    f = 2.0 / (1.0 + tx * tx + ty * ty + tz * tz)
    out = np.empty_like(s)
    out[:, 0] = sx + f * (cx + ccx)
    out[:, 1] = sy + f * (cy + ccy)
    out[:, 2] = sz + f * (cz + ccz)
    return out


def _spin_update(s0: np.ndarray, mid: np.ndarray, force: np.ndarray, dt: float) -> np.ndarray:
    mx, my, mz = mid[:, 0], mid[:, 1], mid[:, 2]
    fx, fy, fz = force[:, 0], force[:, 1], force[:, 2]
    inv = (0.5 * dt) / (mx * mx + my * my + mz * mz)
    theta = np.empty_like(mid)
    theta[:, 0] = (my * fz - mz * fy) * inv
    theta[:, 1] = (mz * fx - mx * fz) * inv
    theta[:, 2] = (mx * fy - my * fx) * inv
    return _cayley(s0, theta)


def _numpy_step(state, compiled, xi, dt, iters, tol):
    n_s = compiled.n_spins
    n3 = 3 * n_s
    force = compiled.rhs(state, xi)
    moving = np.any(force != 0, axis=0)
    new = state.copy()
    if not moving.any():
        return new
    idx = np.flatnonzero(moving)
    s_full = state[:, idx]
    x_full = None if xi is None else xi[:, idx]
    cur = s_full + dt * force[:, idx]
    live = np.arange(idx.size)
    for _ in range(iters):
        s0 = s_full[:, live]
        x0 = None if x_full is None else x_full[:, live]
        mid = 0.5 * (s0 + cur[:, live])
        f = compiled.rhs(mid, x0)
        nxt = np.empty_like(mid)
        b = live.size
        if n3:
            nxt[:n3] = _spin_update(
                s0[:n3].real.reshape(n_s, 3, b),
                mid[:n3].real.reshape(n_s, 3, b),
                f[:n3].real.reshape(n_s, 3, b), dt,
            ).reshape(n3, b)
        if compiled.n_bosons:
            nxt[n3:] = s0[n3:] + dt * f[n3:]
        delta = np.max(np.abs(nxt - cur[:, live]), axis=0)
        cur[:, live] = nxt
        live = live[delta >= tol]
        if live.size == 0:
            break
    new[:, idx] = cur
    return new


def _fused_available() -> bool:
    try:
        from . import _fused  # noqa: F401
    except ImportError:
        return False
    return True


CODEGEN_TERM_LIMIT = 4000
FUSED_TERM_LIMIT = 20000
BACKENDS = ("auto", "codegen", "numba", "numpy")


def select_backend(compiled, backend: str = "auto") -> str:
    """Resolve ``"auto"`` by model size.

    Small models get a generated straight-line stepper (``"codegen"``),
    medium ones the table-driven compiled stepper (``"numba"``), and large
    dense models the sparse/BLAS batch path (``"numpy"``).
    """
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}")
    if backend != "auto":
        return backend
    if not _fused_available():
        return "numpy"
    if compiled.n_terms <= CODEGEN_TERM_LIMIT:
        return "codegen"
    if compiled.n_terms <= FUSED_TERM_LIMIT:
        return "numba"
    return "numpy"


def step(state: np.ndarray, compiled, xi: np.ndarray | None, dt: float,
         iters: int = 4, tol: float = 1e-12, backend: str = "numpy") -> np.ndarray:
    """Advance a batch ``(n_rows, batch)`` by one implicit-midpoint step.

    Iteration stops per trajectory once successive iterates differ by less
    than ``tol`` in max-norm, or after ``iters`` corrections. Trajectories
    with identically zero force are returned unchanged.
    """
    if backend in ("numba", "codegen"):
        out = np.array(state, dtype=compiled.state_dtype, copy=True)
        if xi is None:
            xi = np.zeros((2 * compiled.n_jumps, out.shape[1]))
        xi_dtype = np.float64 if backend == "codegen" else compiled.state_dtype
        xi = np.ascontiguousarray(xi, dtype=xi_dtype)
        args = (out, xi, float(dt), int(iters), float(tol), compiled.n_spins, compiled.n_bosons)
        if backend == "codegen":
            compiled.generated_stepper()(*args)
        else:
            from ._fused import fused_step

            fused_step(*args, *compiled.term_table())
        return out
    return _numpy_step(state, compiled, xi, dt, iters, tol)


def _bad_trajectories(state: np.ndarray, compiled) -> np.ndarray:
    bad = ~np.all(np.isfinite(state), axis=0)
    n3 = 3 * compiled.n_spins
    if n3:
        limit = RUNAWAY_FACTOR * 2.0 * np.repeat(compiled.spin_sizes, 3)[:, None]
        with np.errstate(invalid="ignore"):
            bad |= np.any(np.abs(state[:n3].real) > limit, axis=0)
    return bad


def integrate_batch(initial: np.ndarray, compiled, config: IntegratorConfig,
                    rng: np.random.Generator, record=None, backend: str = "auto"):
    """Integrate a batch of trajectories.

    Parameters
    ----------
    initial : ndarray, shape ``(n_rows, batch)``
    record : callable, optional
        ``record(k, t, state, alive)`` is called at every output sample.
        Without it the full recorded history is returned.
    backend : {"auto", "codegen", "numba", "numpy"}

    Returns
    -------
    history : ndarray or None
        ``(n_records, n_rows, batch)`` when ``record`` is None.
    aborted : ndarray of bool
        Trajectories that went non-finite or ran away.
    abort_time : ndarray
        First detection time per trajectory (NaN when alive).
    """
    dt = config.dt
    backend = select_backend(compiled, backend)
    state = np.array(initial, dtype=compiled.state_dtype, copy=True)
    batch = state.shape[1]
    aborted = np.zeros(batch, dtype=bool)
    abort_time = np.full(batch, np.nan)
    history = [] if record is None else None
    k = 0

    def emit(t):
        nonlocal aborted
        bad = _bad_trajectories(state, compiled) & ~aborted
        if bad.any():
            abort_time[bad] = t
            aborted |= bad
            state[:, bad] = np.nan_to_num(initial[:, bad].astype(state.dtype))
        if record is None:
            history.append(state.copy())
        else:
            record(k, t, state, ~aborted)

    emit(0.0)
    for n in range(1, config.n_steps + 1):
        xi = compiled.draw_noise(rng, batch, dt) if compiled.has_noise else None
        state = step(state, compiled, xi, dt, config.fixed_point_iters,
                     config.fixed_point_tol, backend)
        if n % config.output_stride == 0:
            k += 1
            emit(n * dt)
    hist = np.stack(history) if history is not None else None
    return hist, aborted, abort_time


def integrate_trajectory(initial: np.ndarray, system, config: IntegratorConfig,
                         rng: np.random.Generator, backend: str = "auto"):
    """Integrate one trajectory; returns ``(times, states)``.

    ``states`` has shape ``(n_records, n_rows)``.

    Raises
    ------
    NonFiniteState
        If the trajectory becomes non-finite; ``exc.time`` is the failing time.
    """
    config = config.resolve(system.spec)
    compiled = system.compiled
    init = np.asarray(initial).reshape(-1, 1)
    hist, aborted, when = integrate_batch(init, compiled, config, rng, backend=backend)
    if aborted[0]:
        raise NonFiniteState(f"trajectory became non-finite at t={when[0]:.6g}", time=when[0])
    return config.times(), hist[:, :, 0]
