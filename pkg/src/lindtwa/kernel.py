"""Vectorised evaluation of polynomial right-hand sides.

State batches are stored variable-major, shape ``(n_rows, batch)``, so that
sparse coefficient matrices act from the left.
"""

from __future__ import annotations

from collections import Counter, defaultdict

import numpy as np
import scipy.sparse as sp

from .algebra import BOSON, BOSON_CONJ, NOISE, SPIN, ClassicalExpr, Variable

__all__ = ["PolynomialKernel", "CompiledSystem"]

# above this fill fraction a coefficient block is stored dense (BLAS beats CSR)
DENSE_FILL = 0.1


class PolynomialKernel:
    """Evaluate a list of polynomials on a batch of points.

    Degree-2 terms are regrouped as ``x_a * (K x)_r`` choosing the factor
    ``x_a`` shared by the most terms of the same output, which turns dense
    couplings (e.g. all-to-all rates) into one sparse mat-mat product.

    Parameters
    ----------
    exprs : list of ClassicalExpr
    columns : list of Variable
        Row order of the input batch.
    """

    def __init__(self, exprs, columns):
        col = {v: i for i, v in enumerate(columns)}
        self.n_out = len(exprs)
        self.n_cols = len(columns)
        is_real = all(c.imag == 0 for e in exprs for _, c in e.items())
        self.dtype = np.float64 if is_real else np.complex128
        cast = (lambda c: c.real) if is_real else complex

        self.constant = np.zeros(self.n_out, dtype=self.dtype)
        lin = ([], [], [])
        quad = []
        high = defaultdict(dict)
        for m, expr in enumerate(exprs):
            for key, c in expr.items():
                c = cast(c)
                d = len(key)
                if d == 0:
                    self.constant[m] += c
                elif d == 1:
                    lin[0].append(m)
                    lin[1].append(col[key[0]])
                    lin[2].append(c)
                elif d == 2:
                    quad.append((m, col[key[0]], col[key[1]], c))
                else:
                    cols = tuple(col[v] for v in key)
                    high[cols][m] = high[cols].get(m, 0) + c
        self.has_constant = bool(np.any(self.constant))
        self.linear = sp.csr_matrix(
            (np.array(lin[2], dtype=self.dtype), (lin[0], lin[1])),
            shape=(self.n_out, self.n_cols),
        ) if lin[0] else None
        self._build_quadratic(quad)
        self._build_high(high)

    def _build_quadratic(self, quad):
        if not quad:
            self.quad = None
            return
        count = Counter()
        for m, a, b, _ in quad:
            count[(m, a)] += 1
            if b != a:
                count[(m, b)] += 1
        rows = {}
        k_r, k_c, k_v = [], [], []
        for m, a, b, c in quad:
            if (count[(m, b)], -b) > (count[(m, a)], -a):
                a, b = b, a
            r = rows.setdefault((m, a), len(rows))
            k_r.append(r)
            k_c.append(b)
            k_v.append(c)
        n_rows = len(rows)
        pairs = sorted(rows.items(), key=lambda kv: kv[1])
        self.quad_outer = np.array([a for (m, a), _ in pairs], dtype=np.intp)
        inner = sp.csr_matrix(
            (np.array(k_v, dtype=self.dtype), (k_r, k_c)), shape=(n_rows, self.n_cols)
        )
        if inner.nnz > DENSE_FILL * n_rows * self.n_cols:
            inner = inner.toarray()
        self.quad_inner = inner
        self.quad_scatter = sp.csr_matrix(
            (np.ones(n_rows), ([m for (m, a), _ in pairs], np.arange(n_rows))),
            shape=(self.n_out, n_rows),
        )
        self.quad = True

    def _build_high(self, high):
        if not high:
            self.high = None
            return
        self.high = []
        by_degree = defaultdict(list)
        for cols, outs in high.items():
            by_degree[len(cols)].append((cols, outs))
        for d, items in sorted(by_degree.items()):
            cols = np.array([c for c, _ in items], dtype=np.intp)
            r, c, v = [], [], []
            for j, (_, outs) in enumerate(items):
                for m, coef in outs.items():
                    r.append(m)
                    c.append(j)
                    v.append(coef)
            scatter = sp.csr_matrix(
                (np.array(v, dtype=self.dtype), (r, c)), shape=(self.n_out, len(items))
            )
            self.high.append((cols, scatter))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        batch = x.shape[1]
        dtype = np.result_type(self.dtype, x.dtype)
        out = np.zeros((self.n_out, batch), dtype=dtype)
        if self.has_constant:
            out += self.constant[:, None]
        if self.linear is not None:
            out += self.linear @ x
        if self.quad is not None:
            z = self.quad_inner @ x
            z *= x[self.quad_outer]
            out += self.quad_scatter @ z
        if self.high is not None:
            for cols, scatter in self.high:
                p = x[cols[:, 0]].copy()
                for j in range(1, cols.shape[1]):
                    p *= x[cols[:, j]]
                out += scatter @ p
        return out


class CompiledSystem:
    """Numerical form of a :class:`~lindtwa.langevin.LangevinSystem`.

    State layout: ``3 * n_spins`` real spin rows (site-major, x/y/z) followed
    by ``n_bosons`` complex amplitude rows. Noise rows hold all ``xi_i^x``
    followed by all ``xi_i^y``.
    """

    def __init__(self, system):
        spec = system.spec
        self.system = system
        self.n_spins = spec.n_spins
        self.n_bosons = spec.n_bosons
        self.n_jumps = spec.n_jumps
        self.n_rows = 3 * self.n_spins + self.n_bosons
        self.spin_sizes = np.asarray(spec.spin_sizes, dtype=float)
        self.state_vars = list(system.variables)
        conj_vars = [Variable(BOSON_CONJ, m) for m in range(self.n_bosons)]
        noise_vars = [Variable(NOISE, i, ax) for ax in (0, 1) for i in range(self.n_jumps)]
        self.columns = self.state_vars + conj_vars + noise_vars
        exprs = [system.rhs(v) for v in self.state_vars]
        self.kernel = PolynomialKernel(exprs, self.columns)

        factor = system.dissipation
        active = factor.eigenvalues > 0
        b = factor.factor[:, active] if self.n_jumps else np.zeros((0, 0))
        self.noise_real = not np.iscomplexobj(b) or bool(np.all(b.imag == 0))
        self.noise_factor = b.real if self.noise_real else b
        self.n_modes = int(active.sum()) if self.n_jumps else 0
        self.state_dtype = np.complex128 if self.n_bosons else np.float64
        self.has_noise = self.n_modes > 0 and any(
            not c.is_zero() for c in system.noise_couplings.values()
        )
        self.n_terms = sum(len(e) for e in exprs)
        self._exprs = exprs
        self._table = None
        self._stepper = None

    def generated_stepper(self):
        """Compiled stepper with this system's right-hand side unrolled (built once)."""
        if self._stepper is None:
            from ._fused import generate_stepper

            self._stepper = generate_stepper(self._exprs, self.columns, self.n_spins,
                                             self.n_bosons, self.system.spec.name)
        return self._stepper

    def term_table(self):
        """Flat term list ``(out, coef, vars, degree)`` for the compiled stepper."""
        if self._table is None:
            col = {v: i for i, v in enumerate(self.columns)}
            rows = [(m, c, key) for m, e in enumerate(self._exprs) for key, c in e.items()]
            width = max([len(k) for _, _, k in rows] + [1])
            t_out = np.array([m for m, _, _ in rows], dtype=np.int64)
            coef = np.array([c for _, c, _ in rows], dtype=np.complex128)
            if self.state_dtype == np.float64:
                coef = coef.real.copy()
            t_vars = np.zeros((len(rows), width), dtype=np.int64)
            t_deg = np.zeros(len(rows), dtype=np.int64)
            for t, (_, _, key) in enumerate(rows):
                t_deg[t] = len(key)
                t_vars[t, :len(key)] = [col[v] for v in key]
            self._table = (t_out, coef, t_vars, t_deg)
        return self._table

    def inputs(self, state: np.ndarray, xi: np.ndarray | None) -> np.ndarray:
        parts = [state]
        if self.n_bosons:
            parts.append(np.conj(state[3 * self.n_spins:]))
        if self.n_jumps:
            if xi is None:
                xi = np.zeros((2 * self.n_jumps, state.shape[1]))
            parts.append(xi)
        if len(parts) == 1:
            return state
        return np.concatenate(parts, axis=0) if self.n_bosons == 0 else np.concatenate(
            [p.astype(np.complex128, copy=False) for p in parts], axis=0
        )

    def rhs(self, state: np.ndarray, xi: np.ndarray | None = None) -> np.ndarray:
        """``d state/dt`` for a batch; ``xi`` has shape ``(2 n_jumps, batch)``."""
        out = self.kernel(self.inputs(state, xi))
        if self.n_bosons == 0 and np.iscomplexobj(out):
            out = out.real
        return out

    def draw_noise(self, rng: np.random.Generator, batch: int, dt: float) -> np.ndarray | None:
        """Per-step noise with covariance ``Gamma_ij delta_ab / dt``.

        Returns ``None`` when the model has no active noise channel.
        """
        if not self.has_noise:
            return None
        eta = rng.standard_normal((2, self.n_modes, batch))
        scale = 1.0 / np.sqrt(dt)
        b = self.noise_factor
        m = self.n_jumps
        out = np.empty((2 * m, batch))
        if self.noise_real:
            np.matmul(b, eta[0], out=out[:m])
            np.matmul(b, eta[1], out=out[m:])
        else:
            z = b @ (eta[0] + 1j * eta[1])
            out[:m] = z.real
            out[m:] = z.imag
        out *= scale
        return out
