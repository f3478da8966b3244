"""Trajectory ensembles and observable statistics.

Trajectories are processed in fixed-size batches. Batch ``b`` draws its
initial states and all of its noise from
``np.random.default_rng(SeedSequence(seed, spawn_key=(b,)))``, so results
depend only on ``(seed, batch_size)`` and never on how batches are scheduled
across worker processes. Per-batch moments are merged in batch order.
"""

from __future__ import annotations

import csv
import io
import json
import multiprocessing
import time as _time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .algebra import BOSON_CONJ, SPIN, ClassicalExpr, Variable
from .errors import EnsembleAborted
from .integrator import IntegratorConfig, integrate_batch, select_backend
from .kernel import PolynomialKernel
from .langevin import LangevinSystem, ModelSpec, build_langevin

__all__ = [
    "SpinExpectation",
    "SymmetricTwoPoint",
    "PhotonNumber",
    "CentralPopulation",
    "MeanExcitation",
    "EmissionRate",
    "CustomExpr",
    "ObservableSeries",
    "run_ensemble",
    "emission_rate",
    "batch_rng",
    "harvest_noise",
    "MAX_ABORT_FRACTION",
]

MAX_ABORT_FRACTION = 1e-3
DEFAULT_BATCH = 4096
_AXES = "xyz"


def _axis(a) -> int:
    return _AXES.index(a) if isinstance(a, str) else int(a)


# -- observables -------------------------------------------------------------


@dataclass(frozen=True)
class SpinExpectation:
    """``<sigma_site^axis>`` as the ensemble mean of ``s^axis``."""

    site: int
    axis: int | str = "z"

    @property
    def label(self) -> str:
        return f"s{_AXES[_axis(self.axis)]}{self.site}"

    def check(self, spec: ModelSpec) -> None:
        _check_site(spec, self.site)

    def values(self, state, spec):
        return state[3 * self.site + _axis(self.axis)].real

    def offset(self, spec) -> float:
        return 0.0


@dataclass(frozen=True)
class SymmetricTwoPoint:
    """Symmetrised correlator ``<{sigma_i^a, sigma_j^b}>/2`` as the mean of ``s_i^a s_j^b``."""

    site1: int
    axis1: int | str
    site2: int
    axis2: int | str

    @property
    def label(self) -> str:
        a, b = _AXES[_axis(self.axis1)], _AXES[_axis(self.axis2)]
        return f"s{a}{self.site1}_s{b}{self.site2}"

    def check(self, spec: ModelSpec) -> None:
        _check_site(spec, self.site1)
        _check_site(spec, self.site2)

    def values(self, state, spec):
        u = state[3 * self.site1 + _axis(self.axis1)].real
        v = state[3 * self.site2 + _axis(self.axis2)].real
        return u * v

    def offset(self, spec) -> float:
        return 0.0


@dataclass(frozen=True)
class PhotonNumber:
    """``<a^dagger a>`` as ``mean |a|^2 - 1/2``."""

    mode: int = 0

    @property
    def label(self) -> str:
        return f"n{self.mode}"

    def check(self, spec: ModelSpec) -> None:
        if not 0 <= self.mode < spec.n_bosons:
            raise ValueError(f"boson mode {self.mode} does not exist")

    def values(self, state, spec):
        a = state[3 * spec.n_spins + self.mode]
        return a.real ** 2 + a.imag ** 2

    def offset(self, spec) -> float:
        return -0.5


@dataclass(frozen=True)
class CentralPopulation:
    """Excited-state population ``(1 + s^z)/2`` of one spin (the central spin by default)."""

    site: int = 0

    @property
    def label(self) -> str:
        return f"pop{self.site}"

    def check(self, spec: ModelSpec) -> None:
        _check_site(spec, self.site)

    def values(self, state, spec):
        return 0.5 * (1.0 + state[3 * self.site + 2].real)

    def offset(self, spec) -> float:
        return 0.0


@dataclass(frozen=True)
class MeanExcitation:
    """Average excited population ``(1/N) sum_i (1 + s_i^z)/2`` over all spins."""

    @property
    def label(self) -> str:
        return "excitation"

    def check(self, spec: ModelSpec) -> None:
        if spec.n_spins == 0:
            raise ValueError("model has no spins")

    def values(self, state, spec):
        n = spec.n_spins
        return 0.5 * (1.0 + state[2:3 * n:3].real.mean(axis=0))

    def offset(self, spec) -> float:
        return 0.0


@dataclass(frozen=True)
class EmissionRate:
    """Normalised emission rate ``R``.

    ``R = (1/(N Gamma0)) [ sum_ij Gamma_ij s_i^+ s_j^- + (Gamma0/2) sum_i s_i^z ]``
    with ``s^+- = (s^x +- i s^y)/2``. ``gamma`` defaults to the model's
    dissipation matrix and ``gamma0`` to ``spec.info["gamma0"]`` (else 1).
    Every jump must be the lowering variable of one spin.
    """

    gamma0: float | None = None

    @property
    def label(self) -> str:
        return "R"

    def check(self, spec: ModelSpec) -> None:
        _emission_sites(spec)

    def values(self, state, spec):
        sites = _emission_sites(spec)
        g0 = self.gamma0 if self.gamma0 is not None else spec.info.get("gamma0", 1.0)
        return _emission_values(state, sites, spec.gamma, g0)

    def offset(self, spec) -> float:
        return 0.0


@dataclass(frozen=True)
class CustomExpr:
    """Ensemble mean of a phase-space polynomial plus a constant ordering correction.

    The value reported is ``mean(expr) + ordering_correction``; the exact
    solver evaluates the lifted operator of ``expr`` plus the same constant.
    """

    expr: ClassicalExpr
    ordering_correction: float = 0.0
    name: str = "custom"

    @property
    def label(self) -> str:
        return self.name

    def check(self, spec: ModelSpec) -> None:
        spec._check_variables(self.expr)

    def values(self, state, spec):
        columns = spec.dynamical_variables() + [Variable(BOSON_CONJ, m) for m in range(spec.n_bosons)]
        kernel = PolynomialKernel([self.expr], columns)
        x = state
        if spec.n_bosons:
            x = np.concatenate([state, np.conj(state[3 * spec.n_spins:])], axis=0)
        out = kernel(x)[0]
        return out.real

    def offset(self, spec) -> float:
        return float(self.ordering_correction)


def _check_site(spec, site):
    if not 0 <= site < spec.n_spins:
        raise ValueError(f"spin site {site} does not exist")


def _emission_sites(spec: ModelSpec) -> list[int]:
    sites = []
    for i, jump in enumerate(spec.jumps):
        keys = list(jump.items())
        vars_ = {v for key, _ in keys for v in key}
        ok = (len(keys) == 2 and len(vars_) == 2
              and all(v.kind == SPIN for v in vars_)
              and len({v.index for v in vars_}) == 1)
        if ok:
            site = next(iter(vars_)).index
            ok = jump.equals(0.5 * (ClassicalExpr({(Variable(SPIN, site, 0),): 1.0})
                                    - 1j * ClassicalExpr({(Variable(SPIN, site, 1),): 1.0})))
        if not ok:
            raise ValueError(f"jump {i} is not a spin lowering variable; emission rate undefined")
        sites.append(site)
    return sites


def _emission_values(state, sites, gamma, gamma0):
    idx = np.asarray(sites)
    sx = state[3 * idx].real
    sy = state[3 * idx + 1].real
    sz = state[3 * idx + 2].real
    lower = 0.5 * (sx - 1j * sy)
    coherent = np.einsum("ib,ib->b", np.conj(lower), np.asarray(gamma) @ lower).real
    return (coherent + 0.5 * gamma0 * sz.sum(axis=0)) / (len(sites) * gamma0)


def emission_rate(states: np.ndarray, gamma, gamma0: float = 1.0, sites=None) -> float:
    """Normalised emission rate of an ensemble snapshot.

    Parameters
    ----------
    states : ndarray, shape ``(n_rows, batch)``
        Phase-space samples; spin rows first.
    gamma : ndarray
        Dissipation matrix of the lowering channels.
    gamma0 : float
        Single-emitter rate used for normalisation.
    sites : sequence of int, optional
        Spin carried by each channel (defaults to ``0..len(gamma)-1``).
    """
    gamma = np.atleast_2d(np.asarray(gamma))
    sites = list(range(gamma.shape[0])) if sites is None else list(sites)
    return float(np.mean(_emission_values(np.asarray(states), sites, gamma, gamma0)))


# -- results -----------------------------------------------------------------


@dataclass
class ObservableSeries:
    """Time series of ensemble means and standard errors.

    ``mean`` and ``stderr`` have shape ``(n_times, n_observables)``.
    ``counts`` holds the number of contributing trajectories per time.
    """

    times: np.ndarray
    names: list
    mean: np.ndarray
    stderr: np.ndarray
    counts: np.ndarray
    n_total: int
    n_aborted: int = 0
    info: dict = field(default_factory=dict)

    def column(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        k = self.names.index(name)
        return self.mean[:, k], self.stderr[:, k]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "observable", "mean", "stderr"])
        for r, t in enumerate(self.times):
            for k, name in enumerate(self.names):
                w.writerow([_fmt(t), name, _fmt(self.mean[r, k]), _fmt(self.stderr[r, k])])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "ObservableSeries":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows or set(rows[0]) != {"time", "observable", "mean", "stderr"}:
            raise ValueError(f"{path}: expected columns time, observable, mean, stderr")
        names, times = [], []
        for row in rows:
            if row["observable"] not in names:
                names.append(row["observable"])
            t = float(row["time"])
            if not times or times[-1] != t:
                times.append(t)
        mean = np.full((len(times), len(names)), np.nan)
        err = np.full_like(mean, np.nan)
        t_index = {t: i for i, t in enumerate(times)}
        for row in rows:
            r, k = t_index[float(row["time"])], names.index(row["observable"])
            mean[r, k] = float(row["mean"])
            err[r, k] = float(row["stderr"])
        return cls(np.array(times), names, mean, err, np.zeros(len(times), dtype=int), 0)

    def sidecar(self) -> dict:
        return {"n_total": self.n_total, "n_aborted": self.n_aborted,
                "observables": list(self.names), **self.info}

    def write_sidecar(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.sidecar(), fh, indent=2, sort_keys=True, default=str)


def _fmt(x: float) -> str:
    return repr(float(x))


# -- ensemble driver ---------------------------------------------------------


def batch_rng(seed: int, batch_index: int) -> np.random.Generator:
    """Generator owned by one batch of trajectories."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(batch_index),)))


@dataclass
class _Moments:
    count: np.ndarray
    mean: np.ndarray
    m2: np.ndarray
    aborted: int

    def merge(self, other: "_Moments") -> "_Moments":
        n_a = self.count[:, None].astype(float)
        n_b = other.count[:, None].astype(float)
        n = n_a + n_b
        safe = np.where(n > 0, n, 1.0)
        delta = other.mean - self.mean
        mean = self.mean + delta * n_b / safe
        m2 = self.m2 + other.m2 + delta ** 2 * n_a * n_b / safe
        return _Moments(self.count + other.count, mean, m2, self.aborted + other.aborted)


def _run_batch(system: LangevinSystem, sampler, config, observables, seed, index,
               size, n_noise, backend) -> _Moments:
    spec = system.spec
    rng = batch_rng(seed, index)
    n_init = -(-size // n_noise)
    initial = sampler.sample(rng, n_init)
    if n_noise > 1:
        initial = np.repeat(initial, n_noise, axis=1)[:, :size]
    n_rec = len(config.times())
    n_obs = len(observables)
    count = np.zeros(n_rec, dtype=np.int64)
    mean = np.zeros((n_rec, n_obs))
    m2 = np.zeros((n_rec, n_obs))

    def record(k, t, state, alive):
        live = state[:, alive] if not alive.all() else state
        count[k] = live.shape[1]
        if count[k] == 0:
            return
        for j, obs in enumerate(observables):
            v = np.asarray(obs.values(live, spec), dtype=float)
            mu = v.mean()
            mean[k, j] = mu
            m2[k, j] = np.sum((v - mu) ** 2)

    _, aborted, _ = integrate_batch(initial, system.compiled, config, rng, record, backend)
    return _Moments(count, mean, m2, int(aborted.sum()))


_WORKER: dict = {}


def _worker_batch(index, size):
    w = _WORKER
    return _run_batch(w["system"], w["sampler"], w["config"], w["observables"], w["seed"],
                      index, size, w["n_noise"], w["backend"])


def run_ensemble(model, sampler, config: IntegratorConfig, observables, n_total: int,
                 seed: int = 0, *, batch_size: int = DEFAULT_BATCH, threads: int = 1,
                 n_noise: int = 1, backend: str = "auto") -> ObservableSeries:
    """Average observables over ``n_total`` trajectories.

    Parameters
    ----------
    model : ModelSpec or LangevinSystem
    sampler : SamplerSpec
        Initial-state distribution; must match the model layout.
    config : IntegratorConfig
        ``dt=None`` is resolved from the model's rates.
    observables : sequence
        Observable objects (``SpinExpectation``, ``PhotonNumber``...).
    n_total : int
        Number of trajectories (initial sample, noise stream) pairs.
    seed : int
        Master seed.
    batch_size : int
        Trajectories per RNG stream; part of the reproducibility key.
    threads : int
        Worker processes. Results do not depend on this value.
    n_noise : int
        Noise streams per initial sample (merged sampling). ``batch_size``
        must be a multiple of it.
    backend : str
        Integrator backend, see :func:`lindtwa.integrator.select_backend`.

    Raises
    ------
    EnsembleAborted
        If more than 0.1% of trajectories become non-finite or run away.
    """
    system = model if isinstance(model, LangevinSystem) else build_langevin(model)
    spec = system.spec
    if n_total < 2:
        raise ValueError("n_total must be at least 2")
    if len(sampler.spins) != spec.n_spins or len(sampler.bosons) != spec.n_bosons:
        raise ValueError("sampler layout does not match the model")
    if n_noise < 1 or batch_size % n_noise:
        raise ValueError("batch_size must be a positive multiple of n_noise")
    observables = list(observables)
    for obs in observables:
        obs.check(spec)
    names = [o.label for o in observables]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate observable labels: {names}")
    config = config.resolve(spec)
    backend = select_backend(system.compiled, backend)
    if backend == "codegen":
        system.compiled.generated_stepper()

    sizes = [batch_size] * (n_total // batch_size)
    if n_total % batch_size:
        sizes.append(n_total % batch_size)
    started = _time.perf_counter()
    if threads > 1 and len(sizes) > 1:
        _WORKER.update(system=system, sampler=sampler, config=config, observables=observables,
                       seed=seed, n_noise=n_noise, backend=backend)
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=threads, mp_context=ctx) as pool:
            parts = list(pool.map(_worker_batch, range(len(sizes)), sizes))
        _WORKER.clear()
    else:
        parts = [_run_batch(system, sampler, config, observables, seed, b, size, n_noise, backend)
                 for b, size in enumerate(sizes)]
    total = parts[0]
    for part in parts[1:]:
        total = total.merge(part)
    wall = _time.perf_counter() - started

    if total.aborted > MAX_ABORT_FRACTION * n_total:
        raise EnsembleAborted(
            f"{total.aborted} of {n_total} trajectories aborted (limit {MAX_ABORT_FRACTION:.1%})"
        )
    count = total.count
    with np.errstate(invalid="ignore", divide="ignore"):
        var = total.m2 / np.maximum(count[:, None] - 1, 1)
        stderr = np.sqrt(var / np.maximum(count[:, None], 1))
    offsets = np.array([o.offset(spec) for o in observables])
    info = {"seed": seed, "batch_size": batch_size, "n_noise": n_noise, "backend": backend,
            "wall_time": wall, "dt": config.dt}
    return ObservableSeries(config.times(), names, total.mean + offsets, stderr, count,
                            n_total, total.aborted, info)


def harvest_noise(model, n_steps: int, batch: int, dt: float, seed: int = 0) -> np.ndarray:
    """Noise draws from the generator the engine assigns to batch 0.

    Returns an array ``(n_steps, 2 * n_jumps, batch)``; rows are all
    ``xi^x`` components followed by all ``xi^y`` components.
    """
    system = model if isinstance(model, LangevinSystem) else build_langevin(model)
    compiled = system.compiled
    rng = batch_rng(seed, 0)
    return np.stack([compiled.draw_noise(rng, batch, dt) for _ in range(n_steps)])
