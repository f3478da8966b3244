"""Numba-compiled per-trajectory implicit-midpoint step.

Same scheme as :func:`lindtwa.integrator.step`, fused over the polynomial
evaluation so that small systems run from cache-resident local vectors.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _evaluate(x, out, t_out, t_coef, t_vars, t_deg):
    for i in range(out.shape[0]):
        out[i] = 0.0
    for t in range(t_out.shape[0]):
        p = t_coef[t]
        for d in range(t_deg[t]):
            p *= x[t_vars[t, d]]
        out[t_out[t]] += p


@njit(cache=True)
def _load(x, vec, n_rows, n_spins, n_bosons):
    for i in range(n_rows):
        x[i] = vec[i]
    n3 = 3 * n_spins
    for m in range(n_bosons):
        x[n_rows + m] = np.conj(vec[n3 + m])


@njit(cache=True)
def fused_step(state, xi, dt, iters, tol, n_spins, n_bosons, t_out, t_coef, t_vars, t_deg):
    n_rows, batch = state.shape
    n_noise = xi.shape[0]
    n3 = 3 * n_spins
    x = np.zeros(n_rows + n_bosons + n_noise, dtype=state.dtype)
    f = np.zeros(n_rows, dtype=state.dtype)
    s0 = np.zeros(n_rows, dtype=state.dtype)
    new = np.zeros(n_rows, dtype=state.dtype)
    nxt = np.zeros(n_rows, dtype=state.dtype)
    mid = np.zeros(n_rows, dtype=state.dtype)
    for b in range(batch):
        for i in range(n_rows):
            s0[i] = state[i, b]
        for j in range(n_noise):
            x[n_rows + n_bosons + j] = xi[j, b]
        _load(x, s0, n_rows, n_spins, n_bosons)
        _evaluate(x, f, t_out, t_coef, t_vars, t_deg)
        moving = False
        for i in range(n_rows):
            if f[i] != 0:
                moving = True
                break
        if not moving:
            continue
        for i in range(n_rows):
            new[i] = s0[i] + dt * f[i]
        for _ in range(iters):
            for i in range(n_rows):
                mid[i] = 0.5 * (s0[i] + new[i])
            _load(x, mid, n_rows, n_spins, n_bosons)
            _evaluate(x, f, t_out, t_coef, t_vars, t_deg)
            for k in range(n_spins):
                j = 3 * k
                mx = mid[j].real
                my = mid[j + 1].real
                mz = mid[j + 2].real
                fx = f[j].real
                fy = f[j + 1].real
                fz = f[j + 2].real
                inv = 0.5 * dt / (mx * mx + my * my + mz * mz)
                tx = (my * fz - mz * fy) * inv
                ty = (mz * fx - mx * fz) * inv
                tz = (mx * fy - my * fx) * inv
                sx = s0[j].real
                sy = s0[j + 1].real
                sz = s0[j + 2].real
                cx = ty * sz - tz * sy
                cy = tz * sx - tx * sz
                cz = tx * sy - ty * sx
                ccx = ty * cz - tz * cy
                ccy = tz * cx - tx * cz
                ccz = tx * cy - ty * cx
                g = 2.0 / (1.0 + tx * tx + ty * ty + tz * tz)
                nxt[j] = sx + g * (cx + ccx)
                nxt[j + 1] = sy + g * (cy + ccy)
                nxt[j + 2] = sz + g * (cz + ccz)
            for i in range(n3, n_rows):
                nxt[i] = s0[i] + dt * f[i]
            delta = 0.0
            for i in range(n_rows):
                d = abs(nxt[i] - new[i])
                if d > delta:
                    delta = d
                new[i] = nxt[i]
            if delta < tol:
                break
        for i in range(n_rows):
            state[i, b] = new[i]


def _real_rows(exprs, columns, n_spins, n_bosons):
    """Rewrite the right-hand sides over real variables only.

    Boson amplitudes become ``a = q + i p`` with real placeholders ``q, p``;
    each boson row splits into its real and imaginary part.
    """
    from .algebra import AUX, BOSON, BOSON_CONJ, ClassicalExpr, Variable

    n3 = 3 * n_spins
    mapping = {}
    for k in range(n_bosons):
        q = ClassicalExpr({(Variable(AUX, k, 0),): 1.0})
        p = ClassicalExpr({(Variable(AUX, k, 1),): 1.0})
        mapping[Variable(BOSON, k)] = q + 1j * p
        mapping[Variable(BOSON_CONJ, k)] = q - 1j * p
    rows = []
    for m, e in enumerate(exprs):
        e = e.substitute(mapping) if mapping else e
        if m < n3:
            rows.append(e.real_part())
        else:
            rows.append(e.real_part())
            rows.append(ClassicalExpr({key: c.imag for key, c in e.items()}))
    name = {}
    for i in range(n3):
        name[columns[i]] = f"m{i}"
    for k in range(n_bosons):
        name[Variable(AUX, k, 0)] = f"m{n3 + 2 * k}"
        name[Variable(AUX, k, 1)] = f"m{n3 + 2 * k + 1}"
    n_cols = n3 + 2 * n_bosons
    noise = [v for v in columns if v.kind not in (BOSON, BOSON_CONJ)][n3:]
    for j, v in enumerate(noise):
        name[v] = f"z{j}"
    return rows, name, n_cols, len(noise)


def stepper_source(exprs, columns, n_spins, n_bosons) -> str:
    """Source of a scalar-unrolled stepper with the same signature as :func:`fused_step`.

    Every state component, midpoint and force lives in its own real local,
    so the per-trajectory work stays in registers.
    """
    rows, name, n_real, n_noise = _real_rows(exprs, columns, n_spins, n_bosons)
    n3 = 3 * n_spins
    force = []
    for m, e in enumerate(rows):
        terms = ["*".join([repr(float(c.real))] + [name[v] for v in key]) for key, c in e.items()]
        force.append(f"f{m} = " + (" + ".join(terms) if terms else "0.0"))

    out = ["def fused_step(state, xi, dt, iters, tol, n_spins, n_bosons):",
           "    for b in range(state.shape[1]):"]
    ind = " " * 8
    part = ".real" if n_bosons else ""
    out += [f"{ind}s{i} = state[{i}, b]{part}" for i in range(n3)]
    for k in range(n_bosons):
        out.append(f"{ind}s{n3 + 2 * k} = state[{n3 + k}, b].real")
        out.append(f"{ind}s{n3 + 2 * k + 1} = state[{n3 + k}, b].imag")
    out += [f"{ind}z{j} = xi[{j}, b]" for j in range(n_noise)]
    out += [f"{ind}m{i} = s{i}" for i in range(n_real)]
    out += [ind + line for line in force]
    out.append(ind + "if " + " and ".join(f"f{i} == 0" for i in range(n_real)) + ":")
    out.append(ind + "    continue")
    out += [f"{ind}c{i} = s{i} + dt * f{i}" for i in range(n_real)]
    out.append(ind + "for _ in range(iters):")
    ind2 = ind + "    "
    out += [f"{ind2}m{i} = 0.5 * (s{i} + c{i})" for i in range(n_real)]
    out += [ind2 + line for line in force]
    for k in range(n_spins):
        x, y, z = 3 * k, 3 * k + 1, 3 * k + 2
        out += [
            f"{ind2}inv = 0.5 * dt / (m{x} * m{x} + m{y} * m{y} + m{z} * m{z})",
            f"{ind2}tx = (m{y} * f{z} - m{z} * f{y}) * inv",
            f"{ind2}ty = (m{z} * f{x} - m{x} * f{z}) * inv",
            f"{ind2}tz = (m{x} * f{y} - m{y} * f{x}) * inv",
            f"{ind2}cx = ty * s{z} - tz * s{y}",
            f"{ind2}cy = tz * s{x} - tx * s{z}",
            f"{ind2}cz = tx * s{y} - ty * s{x}",
            f"{ind2}g = 2.0 / (1.0 + tx * tx + ty * ty + tz * tz)",
            f"{ind2}n{x} = s{x} + g * (cx + ty * cz - tz * cy)",
            f"{ind2}n{y} = s{y} + g * (cy + tz * cx - tx * cz)",
            f"{ind2}n{z} = s{z} + g * (cz + tx * cy - ty * cx)",
        ]
    out += [f"{ind2}n{i} = s{i} + dt * f{i}" for i in range(n3, n_real)]
    out.append(f"{ind2}d = 0.0")
    for i in range(n_real):
        out.append(f"{ind2}d = max(d, abs(n{i} - c{i}))")
        out.append(f"{ind2}c{i} = n{i}")
    out.append(ind2 + "if d < tol:")
    out.append(ind2 + "    break")
    out += [f"{ind}state[{i}, b] = c{i}" for i in range(n3)]
    for k in range(n_bosons):
        out.append(f"{ind}state[{n3 + k}, b] = complex(c{n3 + 2 * k}, c{n3 + 2 * k + 1})")
    return "\n".join(out) + "\n"


def generate_stepper(exprs, columns, n_spins, n_bosons, name="model"):
    """Compile a stepper with the right-hand side and state fully unrolled.

    Parameters
    ----------
    exprs : list of ClassicalExpr
        One right-hand side per state row.
    columns : list of Variable
        State rows, then conjugate boson amplitudes, then noise components.
    """
    src = stepper_source(exprs, columns, n_spins, n_bosons)
    ns = {}
    exec(compile(src, f"<step:{name}>", "exec"), ns)
    return njit(error_model="numpy")(ns["fused_step"])
