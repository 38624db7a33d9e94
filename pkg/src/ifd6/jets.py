"""Truncated Taylor ("jet") arithmetic in one and two variables.

A :class:`Jet2` stores the coefficients of a bivariate Taylor expansion about
some center, up to a fixed total degree; arithmetic on jets produces the
expansion of the combined function, so high-order partial derivatives fall out
of ordinary-looking formulas without symbolic differentiation.  Coefficients
live in a dense graded-lexicographic layout (by total degree, then x exponent)
in the trailing axis of a numpy array, so one jet can carry the expansions at
many points at once: leading axes are a batch and broadcast as usual.

:class:`Jet1` is the univariate analogue, used for series along a curve
parameter.  Both types are immutable values and all operations are pure.
"""

from __future__ import annotations

import math
from functools import lru_cache
from numbers import Real

import numpy as np

__all__ = [
    "Jet2",
    "Jet1",
    "DomainError",
    "DivisionByZeroConstantTerm",
    "NonzeroCurveOrigin",
    "compose_bivariate",
    "sin",
    "cos",
    "exp",
    "sqrt",
    "log",
    "powi",
    "powf",
]


class DomainError(ArithmeticError):
    """An elementary function met a constant term outside its domain."""


class DivisionByZeroConstantTerm(ZeroDivisionError):
    """Division by a jet whose constant term is zero."""


class NonzeroCurveOrigin(ValueError):
    """Curve jets passed to :func:`compose_bivariate` must vanish at t = 0."""


def exponents2(degree: int) -> tuple[tuple[int, int], ...]:
    """All (m, n) with m + n <= degree, graded-lexicographic by (m+n, m)."""
    return _exponents2(degree)


@lru_cache(maxsize=None)
def _exponents2(degree):
    return tuple((m, d - m) for d in range(degree + 1) for m in range(d + 1))


@lru_cache(maxsize=None)
def _index2(degree):
    return {mn: k for k, mn in enumerate(_exponents2(degree))}


def ncoeffs2(degree: int) -> int:
    return (degree + 1) * (degree + 2) // 2


@lru_cache(maxsize=None)
def _mul_table2(degree):
    # Triples (out, i, j) of the truncated Cauchy product, sorted by out so a
    # single add.reduceat accumulates each output coefficient.
    idx = _index2(degree)
    exps = _exponents2(degree)
    triples = []
    for i, (m1, n1) in enumerate(exps):
        for j, (m2, n2) in enumerate(exps):
            if m1 + n1 + m2 + n2 <= degree:
                triples.append((idx[(m1 + m2, n1 + n2)], i, j))
    triples.sort()
    out = np.array([t[0] for t in triples])
    left = np.array([t[1] for t in triples])
    right = np.array([t[2] for t in triples])
    starts = np.flatnonzero(np.r_[1, np.diff(out)])
    return left, right, starts


class Jet2:
    """Bivariate Taylor expansion truncated at a fixed total degree."""

    __slots__ = ("degree", "coeffs")

    def __init__(self, degree: int, coeffs: np.ndarray):
        self.degree = degree
        self.coeffs = coeffs

    @classmethod
    def seed(cls, value, kind: str, degree: int) -> "Jet2":
        """Expansion of a constant, or of the coordinate x or y, at `value`."""
        if degree < 0:
            raise ValueError("jet degree must be nonnegative")
        value = np.asarray(value, dtype=float)
        coeffs = np.zeros(value.shape + (ncoeffs2(degree),))
        coeffs[..., 0] = value
        if kind in ("x", "y"):
            if degree >= 1:
                coeffs[..., _index2(degree)[(1, 0) if kind == "x" else (0, 1)]] = 1.0
        elif kind != "const":
            raise ValueError(f"unknown seed kind {kind!r}")
        return cls(degree, coeffs)

    @classmethod
    def seed_xy(cls, x, y, degree: int) -> tuple["Jet2", "Jet2"]:
        return cls.seed(x, "x", degree), cls.seed(y, "y", degree)

    @property
    def value(self):
        return self.coeffs[..., 0]

    def partial(self, m: int, n: int):
        """The (m, n)-th partial derivative at the center: coeff * m! * n!."""
        k = _index2(self.degree)[(m, n)]
        return self.coeffs[..., k] * (math.factorial(m) * math.factorial(n))

    def with_constant(self, value) -> "Jet2":
        coeffs = self.coeffs.copy()
        coeffs[..., 0] = value
        return Jet2(self.degree, coeffs)

    def _check(self, other: "Jet2"):
        if self.degree != other.degree:
            raise ValueError(
                f"jet degrees differ: {self.degree} vs {other.degree}"
            )

    def __add__(self, other):
        if isinstance(other, Jet2):
            self._check(other)
            return Jet2(self.degree, self.coeffs + other.coeffs)
        if isinstance(other, (Real, np.ndarray)):
            coeffs = np.array(
                np.broadcast_arrays(
                    self.coeffs, np.zeros(np.shape(other) + (1,))
                )[0]
            )
            coeffs[..., 0] = coeffs[..., 0] + other
            return Jet2(self.degree, coeffs)
        return NotImplemented

    __radd__ = __add__

    def __neg__(self):
        return Jet2(self.degree, -self.coeffs)

    def __sub__(self, other):
        if isinstance(other, Jet2):
            self._check(other)
            return Jet2(self.degree, self.coeffs - other.coeffs)
        if isinstance(other, (Real, np.ndarray)):
            return self + (-np.asarray(other))
        return NotImplemented

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet2):
            self._check(other)
            left, right, starts = _mul_table2(self.degree)
            prod = self.coeffs[..., left] * other.coeffs[..., right]
            return Jet2(self.degree, np.add.reduceat(prod, starts, axis=-1))
        if isinstance(other, (Real, np.ndarray)):
            return Jet2(self.degree, self.coeffs * np.asarray(other)[..., None])
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet2):
            return self * _reciprocal(other)
        if isinstance(other, (Real, np.ndarray)):
            return self * (1.0 / np.asarray(other, dtype=float))
        return NotImplemented

    def __rtruediv__(self, other):
        return _reciprocal(self) * other

    def __pow__(self, exponent):
        if isinstance(exponent, Real):
            if float(exponent).is_integer():
                return powi(self, int(exponent))
            return powf(self, float(exponent))
        return NotImplemented


class Jet1:
    """Univariate Taylor expansion truncated at a fixed degree."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        self.coeffs = np.asarray(coeffs, dtype=float)

    @classmethod
    def constant(cls, value: float, degree: int) -> "Jet1":
        coeffs = np.zeros(degree + 1)
        coeffs[0] = value
        return cls(coeffs)

    @classmethod
    def identity(cls, degree: int) -> "Jet1":
        """The expansion of t itself (degree >= 1)."""
        coeffs = np.zeros(degree + 1)
        coeffs[1] = 1.0
        return cls(coeffs)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def value(self) -> float:
        return float(self.coeffs[0])

    def truncated(self, degree: int) -> "Jet1":
        if degree >= self.degree:
            return self
        return Jet1(self.coeffs[: degree + 1])

    def with_constant(self, value) -> "Jet1":
        coeffs = self.coeffs.copy()
        coeffs[0] = value
        return Jet1(coeffs)

    def derivative(self) -> "Jet1":
        if self.degree == 0:
            return Jet1(np.zeros(1))
        return Jet1(self.coeffs[1:] * np.arange(1, self.degree + 1))

    def partial(self, p: int) -> float:
        """p-th derivative at t = 0: coeff * p!."""
        return float(self.coeffs[p]) * math.factorial(p)

    def __add__(self, other):
        if isinstance(other, Jet1):
            d = min(self.degree, other.degree)
            return Jet1(self.coeffs[: d + 1] + other.coeffs[: d + 1])
        if isinstance(other, Real):
            coeffs = self.coeffs.copy()
            coeffs[0] += other
            return Jet1(coeffs)
        return NotImplemented

    __radd__ = __add__

    def __neg__(self):
        return Jet1(-self.coeffs)

    def __sub__(self, other):
        if isinstance(other, (Jet1, Real)):
            return self + (-other if isinstance(other, Jet1) else -float(other))
        return NotImplemented

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet1):
            d = min(self.degree, other.degree)
            full = np.convolve(self.coeffs[: d + 1], other.coeffs[: d + 1])
            return Jet1(full[: d + 1])
        if isinstance(other, Real):
            return Jet1(self.coeffs * float(other))
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet1):
            return self * _reciprocal(other)
        if isinstance(other, Real):
            return Jet1(self.coeffs / float(other))
        return NotImplemented

    def __rtruediv__(self, other):
        return _reciprocal(self) * other

    def __pow__(self, exponent):
        if isinstance(exponent, Real):
            if float(exponent).is_integer():
                return powi(self, int(exponent))
            return powf(self, float(exponent))
        return NotImplemented


def _constant_like(a, value):
    if isinstance(a, Jet1):
        coeffs = np.zeros(a.degree + 1)
        coeffs[0] = value
        return Jet1(coeffs)
    coeffs = np.zeros(np.shape(value) + (ncoeffs2(a.degree),))
    coeffs[..., 0] = value
    return Jet2(a.degree, coeffs)


def _compose_series(a, series):
    """Sum series[k] * (a - a0)^k, truncated; series[k] may be batched."""
    w = a.with_constant(0.0)
    out = _constant_like(a, series[-1])
    for k in range(len(series) - 2, -1, -1):
        out = out * w + series[k]
    return out


def _reciprocal(a):
    a0 = np.asarray(a.value, dtype=float)
    if np.any(a0 == 0.0):
        raise DivisionByZeroConstantTerm("division by a jet with zero constant term")
    series = [1.0 / a0]
    for _ in range(a.degree):
        series.append(-series[-1] / a0)
    return _compose_series(a, series)


def sin(a):
    a0 = np.asarray(a.value, dtype=float)
    series = [np.sin(a0 + k * np.pi / 2) / math.factorial(k) for k in range(a.degree + 1)]
    return _compose_series(a, series)


def cos(a):
    a0 = np.asarray(a.value, dtype=float)
    series = [np.cos(a0 + k * np.pi / 2) / math.factorial(k) for k in range(a.degree + 1)]
    return _compose_series(a, series)


def exp(a):
    e0 = np.exp(np.asarray(a.value, dtype=float))
    series = [e0 / math.factorial(k) for k in range(a.degree + 1)]
    return _compose_series(a, series)


def log(a):
    a0 = np.asarray(a.value, dtype=float)
    if np.any(a0 <= 0.0):
        raise DomainError("log of a jet with nonpositive constant term")
    series = [np.log(a0)]
    if a.degree >= 1:
        series.append(1.0 / a0)
    for k in range(2, a.degree + 1):
        series.append(-series[-1] * (k - 1) / (k * a0))
    return _compose_series(a, series)


def sqrt(a):
    a0 = np.asarray(a.value, dtype=float)
    if np.any(a0 <= 0.0):
        raise DomainError("sqrt of a jet with nonpositive constant term")
    return powf(a, 0.5, _domain_checked=True)


def powf(a, alpha: float, _domain_checked: bool = False):
    a0 = np.asarray(a.value, dtype=float)
    if not _domain_checked and np.any(a0 <= 0.0):
        raise DomainError("real power of a jet with nonpositive constant term")
    # series[k] = binom(alpha, k) * a0^(alpha-k)
    series = [np.power(a0, alpha)]
    for k in range(1, a.degree + 1):
        series.append(series[-1] * (alpha - k + 1) / (k * a0))
    return _compose_series(a, series)


def powi(a, n: int):
    if n < 0:
        return powi(_reciprocal(a), -n)
    if n == 0:
        return _constant_like(a, np.ones(np.shape(a.value)))
    result = None
    base = a
    while n:
        if n & 1:
            result = base if result is None else result * base
        n >>= 1
        if n:
            base = base * base
    return result


def compose_bivariate(p: Jet2, r: Jet1, s: Jet1) -> Jet1:
    """The t-series of P(r(t), s(t)) for curve jets with r(0) = s(0) = 0.

    The output degree is min(r.degree, s.degree); since r and s have no
    constant term the returned coefficients are exact through that order.
    """
    if r.coeffs[0] != 0.0 or s.coeffs[0] != 0.0:
        raise NonzeroCurveOrigin("curve jets must satisfy r(0) = s(0) = 0")
    out_degree = min(r.degree, s.degree)
    r = r.truncated(out_degree)
    s = s.truncated(out_degree)
    coeffs = np.asarray(p.coeffs, dtype=float)
    if coeffs.ndim != 1:
        raise ValueError("compose_bivariate expects an unbatched Jet2")
    # powers of r and s up to the largest exponent actually used
    max_m = max((m for (m, n) in _exponents2(p.degree)), default=0)
    max_n = max((n for (m, n) in _exponents2(p.degree)), default=0)
    rp = [Jet1.constant(1.0, out_degree)]
    for _ in range(max_m):
        rp.append(rp[-1] * r)
    sp = [Jet1.constant(1.0, out_degree)]
    for _ in range(max_n):
        sp.append(sp[-1] * s)
    acc = np.zeros(out_degree + 1)
    for k, (m, n) in enumerate(_exponents2(p.degree)):
        c = coeffs[k]
        if c != 0.0:
            acc += c * (rp[m] * sp[n]).coeffs
    return Jet1(acc)
