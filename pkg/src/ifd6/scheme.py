"""The compact 9-point scheme: polynomial families, stencil rows, transmission.

The matrix side of the scheme is one constant 9-point stencil (center -20,
edges 4, corners 1) shared by every grid point.  All problem data enters the
right-hand side.  At a regular center the RHS is a short combination of
source derivatives.  At an irregular center, solution values on the minus
side are rewritten in terms of plus-side derivatives and the jump data via a
2x2 recursion along the curve chart; the recursion is carried out on linear
forms over the data-derivative basis so the transmission coefficients never
need to be materialized as a standalone tensor.

Polynomial coefficients are built in exact rational arithmetic (factorials up
to 5040 invite cancellation) and converted to floating point once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .geometry import CurveChart
from .jets import Jet1, Jet2

__all__ = [
    "OFFSETS",
    "stencil_weight",
    "STENCIL_WEIGHTS",
    "lam",
    "lam1",
    "lam2",
    "gen_G",
    "gen_H",
    "reduce_derivative",
    "regular_rhs",
    "order_condition_matrix",
    "max_order_rank_check",
    "max_order_null_vector",
    "curve_series",
    "CurveSeries",
    "DataBasis",
    "data_basis",
    "LinearForm",
    "TransmissionForms",
    "transmission",
    "irregular_rhs",
    "SingularTransmission",
]

OFFSETS = tuple((k, l) for k in (-1, 0, 1) for l in (-1, 0, 1))

# C_{k,l}: the unique (up to scale) compact stencil of maximal order.
_C = {(0, 0): -20.0}
for _k, _l in OFFSETS:
    if (_k, _l) != (0, 0):
        _C[(_k, _l)] = 1.0 if _k != 0 and _l != 0 else 4.0

STENCIL_WEIGHTS = np.array([[_C[(k, l)] for l in (-1, 0, 1)] for k in (-1, 0, 1)])


def stencil_weight(k: int, l: int) -> float:
    return _C[(k, l)]


class SingularTransmission(RuntimeError):
    """The 2x2 transmission system degenerated; the curve chart is broken."""


# ----------------------------------------------------------------------------
# index sets

@lru_cache(maxsize=None)
def lam(K: int) -> tuple[tuple[int, int], ...]:
    """All (m, n) with m + n <= K, graded-lexicographic by (m+n, m)."""
    if K < 0:
        return ()
    return tuple((m, d - m) for d in range(K + 1) for m in range(d + 1))


@lru_cache(maxsize=None)
def lam1(M: int) -> tuple[tuple[int, int], ...]:
    """The free derivative indices: m in {0, 1}, (0, n) n <= M+1, (1, n) n <= M.

    Every index in lam(M+1) reduces to one of these under the PDE identity;
    the count satisfies len(lam(M+1)) == len(lam1(M)) + len(lam(M-1)).
    """
    members = [(0, n) for n in range(M + 2)] + [(1, n) for n in range(M + 1)]
    return tuple(sorted(members, key=lambda mn: (mn[0] + mn[1], mn[0])))


@lru_cache(maxsize=None)
def lam2(M: int) -> tuple[tuple[int, int], ...]:
    """Complement of lam1 within lam(M+1)."""
    one = set(lam1(M))
    return tuple(mn for mn in lam(M + 1) if mn not in one)


# ----------------------------------------------------------------------------
# polynomial families

PolyXY = dict


def gen_G(m: int, n: int) -> PolyXY:
    """Homogeneous polynomial of degree m+n multiplying u^(m,n), m in {0, 1}."""
    if m not in (0, 1):
        raise ValueError("gen_G requires m in {0, 1}")
    if n < 0:
        raise ValueError("gen_G requires n >= 0")
    poly = {}
    for ell in range(n // 2 + 1):
        a, b = m + 2 * ell, n - 2 * ell
        poly[(a, b)] = Fraction((-1) ** ell, math.factorial(a) * math.factorial(b))
    return poly


def gen_H(m: int, n: int) -> PolyXY:
    """Homogeneous polynomial of degree m+n+2 multiplying f^(m,n)."""
    if m < 0 or n < 0:
        raise ValueError("gen_H requires m, n >= 0")
    poly = {}
    for ell in range(1, n // 2 + 2):
        a, b = m + 2 * ell, n - 2 * ell + 2
        poly[(a, b)] = Fraction((-1) ** ell, math.factorial(a) * math.factorial(b))
    return poly


def _poly_diff(poly: PolyXY, var: str) -> PolyXY:
    out = {}
    for (a, b), c in poly.items():
        if var == "x" and a >= 1:
            out[(a - 1, b)] = c * a
        elif var == "y" and b >= 1:
            out[(a, b - 1)] = c * b
    return out


@lru_cache(maxsize=None)
def _terms(kind: str, m: int, n: int) -> tuple[tuple[tuple[int, int], float], ...]:
    """Float (exponents, coefficient) pairs for a polynomial or its gradient."""
    poly = gen_G(m, n) if kind.startswith("G") else gen_H(m, n)
    if kind.endswith("x"):
        poly = _poly_diff(poly, "x")
    elif kind.endswith("y"):
        poly = _poly_diff(poly, "y")
    return tuple(((a, b), float(c)) for (a, b), c in poly.items())


def _eval_terms(terms, xpow, ypow) -> float:
    return sum(c * xpow[a] * ypow[b] for (a, b), c in terms)


# ----------------------------------------------------------------------------
# derivative reduction (the PDE identity)

def reduce_derivative(m: int, n: int, M: int):
    """Express u^(m,n) over the free u-basis lam1(M) and f-basis lam(M-1).

    Returns (u_terms, f_terms) coefficient dicts.
    """
    if (m, n) not in lam(M + 1):
        raise ValueError(f"({m}, {n}) outside lam({M + 1})")
    if m <= 1:
        return {(m, n): 1.0}, {}
    half = m // 2
    odd = m % 2
    u_terms = {(odd, n + m - odd): float((-1) ** half)}
    f_terms = {}
    for ell in range(1, half + 1):
        f_terms[(m - 2 * ell, n + 2 * ell - 2)] = float((-1) ** ell)
    return u_terms, f_terms


# ----------------------------------------------------------------------------
# regular stencil

def regular_rhs(f_jet: Jet2, h: float, M: int):
    """Right-hand side at a regular center from source derivatives there.

    Batched: a jet carrying many centers yields the RHS at all of them.
    """
    needed = 4 if M >= 6 else 2
    if f_jet.degree < needed:
        raise ValueError(f"f jet degree {f_jet.degree} < {needed} required for M={M}")
    h2 = h * h
    val = -6.0 * h2 * f_jet.partial(0, 0)
    val = val - 0.5 * h2 * h2 * (f_jet.partial(0, 2) + f_jet.partial(2, 0))
    if M >= 6:
        h6 = h2 * h2 * h2
        val = val - (h6 / 60.0) * (f_jet.partial(0, 4) + f_jet.partial(4, 0))
        val = val - (h6 / 15.0) * f_jet.partial(2, 2)
    return val


def order_condition_matrix(M: int) -> np.ndarray:
    """Matrix (g_{m,n,k,l}) over rows lam1(M) and columns OFFSETS."""
    rows = []
    for (m, n) in lam1(M):
        poly = gen_G(m, n)
        rows.append(
            [
                float(sum(c * Fraction(k) ** a * Fraction(l) ** b for (a, b), c in poly.items()))
                for (k, l) in OFFSETS
            ]
        )
    return np.array(rows)


def max_order_rank_check() -> tuple[int, int]:
    """Numerical ranks of the order-condition matrix at M = 6 and M = 7."""
    r6 = int(np.linalg.matrix_rank(order_condition_matrix(6)))
    r7 = int(np.linalg.matrix_rank(order_condition_matrix(7)))
    return r6, r7


def max_order_null_vector() -> np.ndarray:
    """Unit null vector of the M = 6 order-condition matrix, over OFFSETS."""
    _, _, vt = np.linalg.svd(order_condition_matrix(6))
    return vt[-1]


# ----------------------------------------------------------------------------
# series of the polynomial families along a curve chart

@dataclass(frozen=True)
class CurveSeries:
    """Taylor coefficients in t of the families composed with the chart.

    g[(m,n)][p], h[(m,n)][p], r[(m,n)][p] run to p = M+1; the flux-side
    gt, ht, rt run to p = M.  rt carries the orientation sign and the
    arclength factor sqrt(r'^2 + s'^2).
    """

    M: int
    g: dict
    h: dict
    r: dict
    gt: dict
    ht: dict
    rt: dict


def _conv(a: np.ndarray, b: np.ndarray, length: int) -> np.ndarray:
    return np.convolve(a, b)[:length]


def curve_series(chart: CurveChart, M: int) -> CurveSeries:
    """All coefficient families needed by the transmission recursion."""
    L = M + 1
    if chart.degree < L:
        raise ValueError(f"chart degree {chart.degree} < M+1 = {L}")
    r_arr = chart.r.coeffs[: L + 1]
    s_arr = chart.s.coeffs[: L + 1]

    powers = {(0, 0): np.r_[1.0, np.zeros(L)]}
    for m in range(1, L + 1):
        powers[(m, 0)] = _conv(powers[(m - 1, 0)], r_arr, L + 1)
    for m in range(L + 1):
        for n in range(1, L + 1 - m):
            powers[(m, n)] = _conv(powers[(m, n - 1)], s_arr, L + 1)

    rdot = r_arr[1:] * np.arange(1, L + 1)
    sdot = s_arr[1:] * np.arange(1, L + 1)
    arc2 = (_conv(rdot, rdot, L) + _conv(sdot, sdot, L))
    arc = jet_sqrt(arc2)

    def series_of(terms):
        out = np.zeros(L + 1)
        for (a, b), c in terms:
            out += c * powers[(a, b)]
        return out

    g = {}
    gt = {}
    for (m, n) in lam1(M):
        g[(m, n)] = series_of(_terms("G", m, n))
        u = series_of(_terms("Gx", m, n))
        v = series_of(_terms("Gy", m, n))
        gt[(m, n)] = _conv(u, sdot, L) - _conv(v, rdot, L)

    h = {}
    ht = {}
    for (m, n) in lam(M - 1):
        h[(m, n)] = series_of(_terms("H", m, n))
        u = series_of(_terms("Hx", m, n))
        v = series_of(_terms("Hy", m, n))
        ht[(m, n)] = _conv(u, sdot, L) - _conv(v, rdot, L)

    r = {mn: powers[mn] for mn in lam(M + 1)}
    rt = {mn: chart.orient * _conv(powers[mn], arc, L) for mn in lam(M)}

    return CurveSeries(M=M, g=g, h=h, r=r, gt=gt, ht=ht, rt=rt)


def jet_sqrt(coeffs: np.ndarray) -> np.ndarray:
    """Coefficients of sqrt of a univariate truncated series, c[0] > 0."""
    from . import jets as _jets

    return _jets.sqrt(Jet1(coeffs)).coeffs


# ----------------------------------------------------------------------------
# data basis and linear forms

class DataBasis:
    """Fixed ordering of the data-derivative basis for accuracy order M.

    Groups: f_plus over lam(M-1), f_minus over lam(M-1), g1 over lam(M+1),
    g over lam(M); within a group, graded-lexicographic order.
    """

    GROUPS = ("f_plus", "f_minus", "g1", "g")

    def __init__(self, M: int):
        self.M = M
        self.members = {
            "f_plus": lam(M - 1),
            "f_minus": lam(M - 1),
            "g1": lam(M + 1),
            "g": lam(M),
        }
        self._index = {}
        pos = 0
        self.slices = {}
        for group in self.GROUPS:
            start = pos
            for mn in self.members[group]:
                self._index[(group, mn)] = pos
                pos += 1
            self.slices[group] = slice(start, pos)
        self.size = pos

    def index(self, group: str, mn: tuple[int, int]) -> int:
        return self._index[(group, mn)]

    def pack(self, f_plus: Jet2, f_minus: Jet2, g1: Jet2, g: Jet2) -> np.ndarray:
        """Stack the data partial derivatives into (..., size) arrays."""
        cols = []
        for group, jet in zip(self.GROUPS, (f_plus, f_minus, g1, g)):
            for (m, n) in self.members[group]:
                cols.append(np.asarray(jet.partial(m, n), dtype=float))
        return np.stack(np.broadcast_arrays(*cols), axis=-1)


@lru_cache(maxsize=None)
def data_basis(M: int) -> DataBasis:
    return DataBasis(M)


@dataclass(frozen=True)
class LinearForm:
    """A linear functional over one DataBasis."""

    basis: DataBasis
    coeffs: np.ndarray

    def __call__(self, data: np.ndarray) -> float:
        return float(self.coeffs @ data)


@dataclass(frozen=True)
class TransmissionForms:
    """U^(m,n) = u_plus^(m,n) - u_minus^(m,n) as linear forms over the data."""

    basis: DataBasis
    rows: tuple
    U: np.ndarray  # (len(rows), basis.size)

    def form(self, m: int, n: int) -> LinearForm:
        return LinearForm(self.basis, self.U[self.rows.index((m, n))])

    def evaluate(self, data: np.ndarray) -> np.ndarray:
        return self.U @ data


def transmission(chart: CurveChart, M: int) -> TransmissionForms:
    """Recursively determine all jumps U^(m,n), (m,n) in lam1(M).

    The 2x2 systems are solved order by order in the chart parameter; the
    arithmetic is carried on linear forms over the data basis, so the
    transmission coefficients appear implicitly as basis coefficients.
    """
    basis = data_basis(M)
    series = curve_series(chart, M)
    rows = lam1(M)
    pos = {mn: k for k, mn in enumerate(rows)}
    U = np.zeros((len(rows), basis.size))
    U[pos[(0, 0)], basis.index("g1", (0, 0))] = 1.0

    fm_idx = np.array([basis.index("f_minus", mn) for mn in lam(M - 1)], dtype=int)
    fp_idx = np.array([basis.index("f_plus", mn) for mn in lam(M - 1)], dtype=int)
    g1_idx = np.array([basis.index("g1", mn) for mn in lam(M + 1)], dtype=int)
    g_idx = np.array([basis.index("g", mn) for mn in lam(M)], dtype=int)
    g1_fact = np.array(
        [1.0 / (math.factorial(m) * math.factorial(n)) for (m, n) in lam(M + 1)]
    )
    g_fact = np.array(
        [1.0 / (math.factorial(m) * math.factorial(n)) for (m, n) in lam(M)]
    )

    for p in range(1, M + 2):
        F = np.zeros(basis.size)
        Gv = np.zeros(basis.size)
        hp = np.array([series.h[mn][p] for mn in lam(M - 1)])
        F[fm_idx] += hp
        F[fp_idx] -= hp
        F[g1_idx] += g1_fact * np.array([series.r[mn][p] for mn in lam(M + 1)])
        htp = np.array([series.ht[mn][p - 1] for mn in lam(M - 1)])
        Gv[fm_idx] += htp
        Gv[fp_idx] -= htp
        Gv[g_idx] += g_fact * np.array([series.rt[mn][p - 1] for mn in lam(M)])
        for (m, n) in rows:
            if m + n < p:
                row = U[pos[(m, n)]]
                F = F - series.g[(m, n)][p] * row
                Gv = Gv - series.gt[(m, n)][p - 1] * row
        a = series.g[(0, p)][p]
        b = series.g[(1, p - 1)][p]
        c = series.gt[(0, p)][p - 1]
        d = series.gt[(1, p - 1)][p - 1]
        det = a * d - b * c
        if det <= 0.0:
            raise SingularTransmission(
                f"transmission determinant {det:.3e} <= 0 at order p={p}"
            )
        U[pos[(0, p)]] = (d * F - b * Gv) / det
        U[pos[(1, p - 1)]] = (-c * F + a * Gv) / det

    return TransmissionForms(basis=basis, rows=rows, U=U)


# ----------------------------------------------------------------------------
# irregular right-hand side

def irregular_rhs(
    chart: CurveChart,
    dplus,
    dminus,
    v0: float,
    w0: float,
    h: float,
    data: np.ndarray,
    M: int,
) -> float:
    """Stencil right-hand side at an irregular center.

    `data` is the packed derivative vector of (f_plus, f_minus, g1, g) at the
    chart's base point, in data_basis(M) order; (v0, w0) is the offset of the
    center from the base point.
    """
    basis = data_basis(M)
    if data.shape[-1] != basis.size:
        raise ValueError("data vector does not match the basis for this M")

    xpow = {}
    ypow = {}
    for (k, l) in OFFSETS:
        xs = v0 + k * h
        ys = w0 + l * h
        xp = [1.0]
        yp = [1.0]
        for _ in range(M + 1):
            xp.append(xp[-1] * xs)
            yp.append(yp[-1] * ys)
        xpow[(k, l)] = xp
        ypow[(k, l)] = yp

    val = 0.0
    for group, dset in (("f_plus", dplus), ("f_minus", dminus)):
        for (m, n) in lam(M - 1):
            terms = _terms("H", m, n)
            coeff = sum(
                _C[kl] * _eval_terms(terms, xpow[kl], ypow[kl]) for kl in dset
            )
            val += data[basis.index(group, (m, n))] * coeff

    if dminus:
        i_minus = np.array(
            [
                sum(
                    _C[kl] * _eval_terms(_terms("G", m, n), xpow[kl], ypow[kl])
                    for kl in dminus
                )
                for (m, n) in lam1(M)
            ]
        )
        forms = transmission(chart, M)
        val -= float(i_minus @ (forms.U @ data))
    return val
