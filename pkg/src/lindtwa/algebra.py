"""Commutative polynomial algebra over classical phase-space variables.

Spin components ``s_k^x, s_k^y, s_k^z`` are real, boson amplitudes ``a_m`` and
their conjugates ``abar_m`` are treated as independent variables. Two extra
kinds of inert symbols live in the same algebra: the auxiliary fields used when
building Langevin equations and the real noise components. They have vanishing
Poisson bracket with everything.

Poisson brackets follow the Dirac correspondence ``{A, B} <-> -i[A, B]``:

    {s^a_k, s^b_k} = 2 eps_abc s^c_k,      {a_m, abar_m} = -i.

Expressions are immutable; arithmetic returns new objects.
"""

from __future__ import annotations

from collections import defaultdict
from typing import Iterable, Mapping, NamedTuple, Union

import numpy as np

__all__ = [
    "Variable",
    "ClassicalExpr",
    "SPIN",
    "BOSON",
    "BOSON_CONJ",
    "NOISE",
    "AUX",
    "AUX_CONJ",
    "spin",
    "sx",
    "sy",
    "sz",
    "splus",
    "sminus",
    "boson",
    "boson_conj",
    "noise",
    "aux",
    "aux_conj",
    "const",
    "add",
    "expr_sum",
    "multiply",
    "conjugate",
    "differentiate",
    "poisson_bracket",
]

SPIN = 0
BOSON = 1
BOSON_CONJ = 2
NOISE = 3
AUX = 4
AUX_CONJ = 5

AXES = "xyz"
_KIND_PREFIX = {BOSON: "a", BOSON_CONJ: "abar", AUX: "phi", AUX_CONJ: "phibar"}

# eps_{abc} s^c for the spin bracket: _LEVI[(a, b)] = (c, sign)
_LEVI = {
    (0, 1): (2, 1),
    (1, 2): (0, 1),
    (2, 0): (1, 1),
    (1, 0): (2, -1),
    (2, 1): (0, -1),
    (0, 2): (1, -1),
}


class Variable(NamedTuple):
    """A classical phase-space symbol; tuple order is the canonical order."""

    kind: int
    index: int
    axis: int = 0

    def __str__(self) -> str:
        if self.kind == SPIN:
            return f"s{AXES[self.axis]}{self.index}"
        if self.kind == NOISE:
            return f"xi{AXES[self.axis]}{self.index}"
        return f"{_KIND_PREFIX[self.kind]}{self.index}"

    def conj(self) -> "Variable":
        if self.kind == BOSON:
            return Variable(BOSON_CONJ, self.index)
        if self.kind == BOSON_CONJ:
            return Variable(BOSON, self.index)
        if self.kind == AUX:
            return Variable(AUX_CONJ, self.index)
        if self.kind == AUX_CONJ:
            return Variable(AUX, self.index)
        return self


Key = tuple  # sorted tuple of Variable
Scalar = Union[int, float, complex, np.number]


def _coerce(value) -> "ClassicalExpr":
    if isinstance(value, ClassicalExpr):
        return value
    if isinstance(value, Variable):
        return ClassicalExpr({(value,): 1.0})
    if isinstance(value, (int, float, complex, np.number)):
        return ClassicalExpr({(): complex(value)})
    raise TypeError(f"cannot interpret {value!r} as a classical expression")


class ClassicalExpr:
    """Polynomial with complex coefficients in canonical normal form.

    Parameters
    ----------
    terms : mapping
        ``{factors: coefficient}`` where ``factors`` is an iterable of
        :class:`Variable`. Keys are sorted, duplicates merged and zero
        coefficients dropped.
    """

    __slots__ = ("_terms", "_index", "_hash")

    def __init__(self, terms: Mapping[Iterable[Variable], Scalar] | None = None):
        merged: dict[Key, complex] = defaultdict(complex)
        if terms:
            for factors, coef in terms.items():
                merged[tuple(sorted(factors))] += complex(coef)
        self._terms = {k: c for k, c in merged.items() if c != 0}
        self._index = None
        self._hash = None

    @classmethod
    def _raw(cls, terms: dict) -> "ClassicalExpr":
        # terms already canonical and zero-free
        obj = cls.__new__(cls)
        obj._terms = terms
        obj._index = None
        obj._hash = None
        return obj

    # -- introspection -------------------------------------------------

    @property
    def terms(self) -> Mapping[Key, complex]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def __len__(self) -> int:
        return len(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def variables(self) -> set[Variable]:
        return {v for key in self._terms for v in key}

    def degree(self) -> int:
        return max((len(k) for k in self._terms), default=0)

    def coefficient(self, factors: Iterable[Variable] = ()) -> complex:
        return self._terms.get(tuple(sorted(factors)), 0j)

    def _by_var(self) -> dict[Variable, list[Key]]:
        if self._index is None:
            index = defaultdict(list)
            for key in self._terms:
                for v in set(key):
                    index[v].append(key)
            self._index = index
        return self._index

    def normalized(self) -> "ClassicalExpr":
        return ClassicalExpr(self._terms)

    # -- arithmetic ----------------------------------------------------

    def __add__(self, other) -> "ClassicalExpr":
        other = _coerce(other)
        out = dict(self._terms)
        for k, c in other._terms.items():
            s = out.get(k, 0) + c
            if s == 0:
                out.pop(k, None)
            else:
                out[k] = s
        return ClassicalExpr._raw(out)

    __radd__ = __add__

    def __neg__(self) -> "ClassicalExpr":
        return ClassicalExpr._raw({k: -c for k, c in self._terms.items()})

    def __sub__(self, other) -> "ClassicalExpr":
        return self + (-_coerce(other))

    def __rsub__(self, other) -> "ClassicalExpr":
        return _coerce(other) - self

    def __mul__(self, other) -> "ClassicalExpr":
        if isinstance(other, (int, float, complex, np.number)):
            c = complex(other)
            if c == 0:
                return ClassicalExpr()
            return ClassicalExpr._raw({k: v * c for k, v in self._terms.items()})
        other = _coerce(other)
        out: dict[Key, complex] = defaultdict(complex)
        for k1, c1 in self._terms.items():
            for k2, c2 in other._terms.items():
                key = k1 + k2 if not k1 or not k2 or k1[-1] <= k2[0] else tuple(sorted(k1 + k2))
                out[key] += c1 * c2
        return ClassicalExpr._raw({k: c for k, c in out.items() if c != 0})

    __rmul__ = __mul__

    def __truediv__(self, other: Scalar) -> "ClassicalExpr":
        return self * (1.0 / complex(other))

    def __pow__(self, n: int) -> "ClassicalExpr":
        if n < 0:
            raise ValueError("negative powers are not polynomial")
        out = ClassicalExpr({(): 1.0})
        for _ in range(n):
            out = out * self
        return out

    # -- comparison ----------------------------------------------------

    def __eq__(self, other) -> bool:
        try:
            other = _coerce(other)
        except TypeError:
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._terms.items()))
        return self._hash

    def equals(self, other, atol: float = 1e-12) -> bool:
        """Coefficient-wise equality up to ``atol``."""
        diff = self - _coerce(other)
        return all(abs(c) <= atol for c in diff._terms.values())

    def chop(self, atol: float = 1e-13) -> "ClassicalExpr":
        """Drop terms with ``|coef| <= atol`` and zero out tiny real/imag parts."""
        out = {}
        for k, c in self._terms.items():
            re = c.real if abs(c.real) > atol else 0.0
            im = c.imag if abs(c.imag) > atol else 0.0
            if re or im:
                out[k] = complex(re, im)
        return ClassicalExpr._raw(out)

    def real_part(self) -> "ClassicalExpr":
        return ClassicalExpr({k: c.real for k, c in self._terms.items()})

    def max_imag(self) -> float:
        return max((abs(c.imag) for c in self._terms.values()), default=0.0)

    def max_abs_coefficient(self) -> float:
        return max((abs(c) for c in self._terms.values()), default=0.0)

    # -- calculus and substitution -------------------------------------

    def conjugate(self) -> "ClassicalExpr":
        out = {}
        for k, c in self._terms.items():
            out[tuple(sorted(v.conj() for v in k))] = c.conjugate()
        return ClassicalExpr._raw(out)

    def diff(self, var: Variable) -> "ClassicalExpr":
        index = self._by_var()
        if var not in index:
            return ClassicalExpr()
        out: dict[Key, complex] = defaultdict(complex)
        for key in index[var]:
            power = key.count(var)
            pos = key.index(var)
            out[key[:pos] + key[pos + 1:]] += power * self._terms[key]
        return ClassicalExpr._raw(dict(out))

    def substitute(self, mapping: Mapping[Variable, "ClassicalExpr"]) -> "ClassicalExpr":
        """Replace variables by expressions (simultaneously)."""
        mapping = {v: _coerce(e) for v, e in mapping.items()}
        acc: dict[Key, complex] = defaultdict(complex)
        for key, c in self._terms.items():
            if not any(v in mapping for v in key):
                acc[key] += c
                continue
            kept = tuple(v for v in key if v not in mapping)
            prod = ClassicalExpr._raw({kept: c})
            for v in key:
                if v in mapping:
                    prod = prod * mapping[v]
            for k, v in prod._terms.items():
                acc[k] += v
        return ClassicalExpr._raw({k: c for k, c in acc.items() if c != 0})

    def evaluate(self, values: Mapping[Variable, complex]) -> complex:
        total = 0j
        for key, c in self._terms.items():
            p = c
            for v in key:
                p *= values[v]
            total += p
        return total

    # -- rendering -----------------------------------------------------

    def __str__(self) -> str:
        if not self._terms:
            return "0"
        parts = []
        for key in sorted(self._terms):
            c = self._terms[key]
            parts.append(f"{_format_coef(c)}{_format_key(key)}")
        text = " ".join(parts)
        return text[2:] if text.startswith("+ ") else text

    def __repr__(self) -> str:
        return f"ClassicalExpr({self})"


def _format_coef(c: complex) -> str:
    if c.imag == 0:
        sign = "-" if c.real < 0 else "+"
        return f"{sign} {abs(c.real):.12g}"
    if c.real == 0:
        sign = "-" if c.imag < 0 else "+"
        return f"{sign} {abs(c.imag):.12g}i"
    return f"+ ({c.real:.12g}{c.imag:+.12g}i)"


def _format_key(key: Key) -> str:
    if not key:
        return ""
    out = []
    i = 0
    while i < len(key):
        v = key[i]
        n = 1
        while i + n < len(key) and key[i + n] == v:
            n += 1
        out.append(str(v) if n == 1 else f"{v}^{n}")
        i += n
    return "*" + "*".join(out)


# -- constructors ---------------------------------------------------------


def const(value: Scalar) -> ClassicalExpr:
    return ClassicalExpr({(): value})


def spin(site: int, axis: int | str) -> ClassicalExpr:
    if isinstance(axis, str):
        axis = AXES.index(axis)
    return ClassicalExpr({(Variable(SPIN, site, axis),): 1.0})


def sx(site: int) -> ClassicalExpr:
    return spin(site, 0)


def sy(site: int) -> ClassicalExpr:
    return spin(site, 1)


def sz(site: int) -> ClassicalExpr:
    return spin(site, 2)


def splus(site: int) -> ClassicalExpr:
    """``s^+ = (s^x + i s^y) / 2``, the classical image of sigma^+."""
    return ClassicalExpr({(Variable(SPIN, site, 0),): 0.5, (Variable(SPIN, site, 1),): 0.5j})


def sminus(site: int) -> ClassicalExpr:
    """``s^- = (s^x - i s^y) / 2``, the classical image of sigma^-."""
    return ClassicalExpr({(Variable(SPIN, site, 0),): 0.5, (Variable(SPIN, site, 1),): -0.5j})


def boson(mode: int) -> ClassicalExpr:
    return ClassicalExpr({(Variable(BOSON, mode),): 1.0})


def boson_conj(mode: int) -> ClassicalExpr:
    return ClassicalExpr({(Variable(BOSON_CONJ, mode),): 1.0})


def noise(channel: int, axis: int) -> ClassicalExpr:
    return ClassicalExpr({(Variable(NOISE, channel, axis),): 1.0})


def aux(channel: int) -> ClassicalExpr:
    return ClassicalExpr({(Variable(AUX, channel),): 1.0})


def aux_conj(channel: int) -> ClassicalExpr:
    return ClassicalExpr({(Variable(AUX_CONJ, channel),): 1.0})


# -- functional interface -------------------------------------------------


def add(a, b) -> ClassicalExpr:
    return _coerce(a) + _coerce(b)


def expr_sum(exprs: Iterable) -> ClassicalExpr:
    """Sum of many expressions in one pass (``sum()`` would copy at every step)."""
    acc: dict[Key, complex] = defaultdict(complex)
    for e in exprs:
        for k, c in _coerce(e)._terms.items():
            acc[k] += c
    return ClassicalExpr._raw({k: c for k, c in acc.items() if c != 0})


def multiply(a, b) -> ClassicalExpr:
    return _coerce(a) * _coerce(b)


def conjugate(a) -> ClassicalExpr:
    return _coerce(a).conjugate()


def differentiate(a, v: Variable) -> ClassicalExpr:
    return _coerce(a).diff(v)


def _dynamic_support(expr: ClassicalExpr) -> tuple[set[int], set[int]]:
    sites, modes = set(), set()
    for v in expr._by_var():
        if v.kind == SPIN:
            sites.add(v.index)
        elif v.kind in (BOSON, BOSON_CONJ):
            modes.add(v.index)
    return sites, modes


def poisson_bracket(a, b) -> ClassicalExpr:
    """Classical Poisson bracket ``{a, b}``.

    Spin part: ``sum_k 2 eps_abc s^c_k (da/ds^a_k)(db/ds^b_k)``.
    Boson part: ``-i sum_m (da/da_m db/dabar_m - da/dabar_m db/da_m)``.
    Noise and auxiliary symbols are inert.
    """
    a = _coerce(a)
    b = _coerce(b)
    sites_a, modes_a = _dynamic_support(a)
    sites_b, modes_b = _dynamic_support(b)
    out = ClassicalExpr()
    for k in sorted(sites_a & sites_b):
        da = [a.diff(Variable(SPIN, k, ax)) for ax in range(3)]
        db = [b.diff(Variable(SPIN, k, ax)) for ax in range(3)]
        for (al, be), (ga, sign) in _LEVI.items():
            if da[al].is_zero() or db[be].is_zero():
                continue
            s_ga = ClassicalExpr._raw({(Variable(SPIN, k, ga),): complex(2 * sign)})
            out = out + da[al] * db[be] * s_ga
    for m in sorted(modes_a & modes_b):
        va, vb = Variable(BOSON, m), Variable(BOSON_CONJ, m)
        term = a.diff(va) * b.diff(vb) - a.diff(vb) * b.diff(va)
        out = out + term * (-1j)
    return out
