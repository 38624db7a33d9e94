"""Level-set geometry: grid, point classification, base points, local charts.

The interface curve is the zero set of a smooth level function psi.  Grid
nodes with psi >= 0 count as the plus side (nodes exactly on the curve
included).  A stencil center is regular when its whole 3x3 block lies on one
side, irregular otherwise; each irregular center gets a base point on the
curve inside its open 2h x 2h square and a local parameterization
(r(t), s(t)) of the curve there, obtained order by order from the implicit
function theorem using jet arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import expr as expr_mod
from . import jets
from .expr import Expr, eval_scalar
from .jets import Jet1, Jet2, compose_bivariate

__all__ = [
    "Grid",
    "Classification",
    "CurveChart",
    "classify",
    "find_base_point",
    "local_chart",
    "BasePointNotFound",
    "BasePointAmbiguous",
    "DegenerateGradient",
]

OFFSETS = tuple((k, l) for k in (-1, 0, 1) for l in (-1, 0, 1))


class BasePointNotFound(RuntimeError):
    """No base point could be located inside the open stencil square."""


class BasePointAmbiguous(RuntimeError):
    """The 3x3 sign pattern is incompatible with a single curve chart."""


class DegenerateGradient(RuntimeError):
    """The level function has (numerically) vanishing gradient on the curve."""


@dataclass(frozen=True)
class Grid:
    """Uniform Cartesian grid on (l1, l2) x (l3, l4) with n2 = n0 * n1."""

    l1: float
    l2: float
    l3: float
    l4: float
    n1: int

    def __post_init__(self):
        if not self.l2 > self.l1:
            raise ValueError("need l2 > l1")
        ratio = (self.l4 - self.l3) / (self.l2 - self.l1)
        if ratio < 1.0 - 1e-9 or abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ValueError("l4 - l3 must be a positive integer multiple of l2 - l1")
        if self.n1 < 2:
            raise ValueError("need n1 >= 2")

    @property
    def n0(self) -> int:
        return round((self.l4 - self.l3) / (self.l2 - self.l1))

    @property
    def n2(self) -> int:
        return self.n0 * self.n1

    @property
    def h(self) -> float:
        return (self.l2 - self.l1) / self.n1

    def x(self, i: int) -> float:
        return self.l1 + i * self.h

    def y(self, j: int) -> float:
        return self.l3 + j * self.h

    def xs(self) -> np.ndarray:
        return self.l1 + self.h * np.arange(self.n1 + 1)

    def ys(self) -> np.ndarray:
        return self.l3 + self.h * np.arange(self.n2 + 1)


@dataclass(frozen=True)
class Classification:
    """Node sides and per-center kinds for one grid and level function."""

    grid: Grid
    node_plus: np.ndarray  # bool, shape (n1+1, n2+1); True where psi >= 0

    @cached_property
    def irregular(self) -> np.ndarray:
        """Bool over interior centers [i-1, j-1], True where the 3x3 block straddles."""
        b = self.node_plus.astype(np.int64)
        count = sum(
            b[1 + k : self.grid.n1 + k, 1 + l : self.grid.n2 + l]
            for (k, l) in OFFSETS
        )
        return (count > 0) & (count < 9)

    @cached_property
    def irregular_points(self) -> tuple[tuple[int, int], ...]:
        """Irregular centers (i, j) in unknown order (j outer, i inner)."""
        ii, jj = np.nonzero(self.irregular)
        order = np.lexsort((ii, jj))
        return tuple((int(ii[k]) + 1, int(jj[k]) + 1) for k in order)

    def side_plus(self, i: int, j: int) -> bool:
        return bool(self.node_plus[i, j])

    def is_regular(self, i: int, j: int) -> bool:
        return not bool(self.irregular[i - 1, j - 1])

    def partition(self, i: int, j: int):
        """Split the nine offsets into (d_plus, d_minus) for center (i, j)."""
        dplus = []
        dminus = []
        for (k, l) in OFFSETS:
            if self.node_plus[i + k, j + l]:
                dplus.append((k, l))
            else:
                dminus.append((k, l))
        if not _connected(dplus) and not _connected(dminus):
            raise BasePointAmbiguous(
                f"stencil at ({i}, {j}) is crossed by the interface more than once"
            )
        return tuple(dplus), tuple(dminus)


def _connected(offsets) -> bool:
    """8-neighbor connectivity of a subset of the 3x3 block."""
    if len(offsets) <= 1:
        return True
    cells = set(offsets)
    seen = {offsets[0]}
    stack = [offsets[0]]
    while stack:
        ck, cl = stack.pop()
        for dk in (-1, 0, 1):
            for dl in (-1, 0, 1):
                nb = (ck + dk, cl + dl)
                if nb in cells and nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
    return len(seen) == len(cells)


def classify(grid: Grid, psi: Expr) -> Classification:
    """Evaluate psi on all nodes and record sides; psi == 0 counts as plus.

    Nodes on the curve land on the plus side.  In floating point, "on the
    curve" means |psi| below roundoff relative to the local variation of psi
    over one cell (a node at a mathematical zero of psi may evaluate to a few
    ulps of either sign).
    """
    xg = grid.xs()[:, None]
    yg = grid.ys()[None, :]
    vals = np.broadcast_to(
        np.asarray(eval_scalar(psi, xg, yg), dtype=float), (grid.n1 + 1, grid.n2 + 1)
    )
    cell = 0.0
    if grid.n1 >= 1:
        cell = max(cell, float(np.max(np.abs(np.diff(vals, axis=0)))))
        cell = max(cell, float(np.max(np.abs(np.diff(vals, axis=1)))))
    snap = 1e-13 * max(cell, 1e-300)
    return Classification(grid, vals >= -snap)


def _residual_scale(psi: Expr, x: float, y: float, h: float) -> float:
    gx, gy = _gradient(psi, x, y)
    return max(1.0, math.hypot(gx, gy) * h)


def _gradient(psi: Expr, x: float, y: float):
    jx, jy = Jet2.seed_xy(x, y, 1)
    j = expr_mod.eval_jet2(psi, jx, jy)
    return float(j.partial(1, 0)), float(j.partial(0, 1))


def _segment_root(psi: Expr, p0, p1, fa: float, fb: float, h: float):
    """Root of psi along the segment p0-p1 bracketed by fa, fb."""
    a, b = 0.0, 1.0
    d = (p1[0] - p0[0], p1[1] - p0[1])

    def phi(t):
        return eval_scalar(psi, p0[0] + t * d[0], p0[1] + t * d[1])

    if fb == 0.0:
        t = 1.0
    else:
        for _ in range(100):
            m = 0.5 * (a + b)
            fm = phi(m)
            if fm == 0.0:
                a = b = m
                break
            if (fm > 0.0) == (fa > 0.0):
                a, fa = m, fm
            else:
                b, fb = m, fm
            if b - a <= 1e-15:
                break
        t = 0.5 * (a + b)
    # Newton polish along the segment
    for _ in range(5):
        x, y = p0[0] + t * d[0], p0[1] + t * d[1]
        f = eval_scalar(psi, x, y)
        gx, gy = _gradient(psi, x, y)
        dphi = gx * d[0] + gy * d[1]
        if dphi == 0.0:
            break
        t_new = t - f / dphi
        if not (min(a, t) - 0.1 <= t_new <= max(b, t) + 0.1):
            break
        t = min(max(t_new, 0.0), 1.0)
    return p0[0] + t * d[0], p0[1] + t * d[1]


def _inside_open_square(grid: Grid, i: int, j: int, x: float, y: float) -> bool:
    h = grid.h
    return (
        abs(x - grid.x(i)) < h * (1.0 - 1e-12)
        and abs(y - grid.y(j)) < h * (1.0 - 1e-12)
    )


def find_base_point(grid: Grid, psi: Expr, i: int, j: int) -> tuple[float, float]:
    """Deterministically pick a root of psi inside the open square at (i, j).

    Strategy: bisection+Newton on the four axis segments from the center to
    its neighbors, then on any sign-differing pair of the nine stencil points,
    then damped Newton projection of such a pair's midpoint.
    """
    h = grid.h
    x0, y0 = grid.x(i), grid.y(j)
    f = {}
    for (k, l) in OFFSETS:
        f[(k, l)] = eval_scalar(psi, x0 + k * h, y0 + l * h)
    fc = f[(0, 0)]
    if fc == 0.0:
        return x0, y0

    def accept(pt):
        if pt is None:
            return None
        x, y = pt
        if not _inside_open_square(grid, i, j, x, y):
            return None
        if abs(eval_scalar(psi, x, y)) > 1e-12 * _residual_scale(psi, x, y, h):
            return None
        return (x, y)

    for (k, l) in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        fe = f[(k, l)]
        if fe == 0.0 or (fe > 0.0) != (fc > 0.0):
            pt = accept(
                _segment_root(psi, (x0, y0), (x0 + k * h, y0 + l * h), fc, fe, h)
            )
            if pt is not None:
                return pt

    pairs = [
        (a, b)
        for ai, a in enumerate(OFFSETS)
        for b in OFFSETS[ai + 1 :]
        if (f[a] > 0.0) != (f[b] > 0.0)
    ]
    for (a, b) in pairs:
        p0 = (x0 + a[0] * h, y0 + a[1] * h)
        p1 = (x0 + b[0] * h, y0 + b[1] * h)
        pt = accept(_segment_root(psi, p0, p1, f[a], f[b], h))
        if pt is not None:
            return pt

    for (a, b) in pairs:
        x = x0 + 0.5 * (a[0] + b[0]) * h
        y = y0 + 0.5 * (a[1] + b[1]) * h
        for _ in range(20):
            v = eval_scalar(psi, x, y)
            gx, gy = _gradient(psi, x, y)
            g2 = gx * gx + gy * gy
            if g2 == 0.0:
                break
            step = 1.0
            while step > 1e-4:
                xn, yn = x - step * v * gx / g2, y - step * v * gy / g2
                if abs(eval_scalar(psi, xn, yn)) < abs(v):
                    x, y = xn, yn
                    break
                step *= 0.5
            else:
                break
        pt = accept((x, y))
        if pt is not None:
            return pt

    raise BasePointNotFound(
        f"no base point inside the open square at grid point ({i}, {j})"
    )


@dataclass(frozen=True)
class CurveChart:
    """Local parameterization x = x* + r(t), y = y* + s(t) with r(0)=s(0)=0.

    `orient` is +1 when (s'(0), -r'(0)) points from the minus to the plus
    side, -1 otherwise.
    """

    x_star: float
    y_star: float
    r: Jet1
    s: Jet1
    orient: float

    @property
    def degree(self) -> int:
        return self.r.degree


def local_chart(psi: Expr, base: tuple[float, float], order: int) -> CurveChart:
    """Build the curve chart at a base point up to t-degree order + 1."""
    x_star, y_star = base
    jx, jy = Jet2.seed_xy(x_star, y_star, order + 2)
    return chart_from_jet(expr_mod.eval_jet2(psi, jx, jy), base, order)


def chart_from_jet(psi_jet: Jet2, base: tuple[float, float], order: int) -> CurveChart:
    """As :func:`local_chart` but reusing an existing jet of psi at the base."""
    x_star, y_star = base
    gx = float(psi_jet.partial(1, 0))
    gy = float(psi_jet.partial(0, 1))
    if math.hypot(gx, gy) < 1e-12:
        raise DegenerateGradient(
            f"gradient of psi vanishes at base point ({x_star:.6g}, {y_star:.6g})"
        )
    degree = order + 1
    solve_for_y = abs(gy) >= abs(gx)
    pivot = gy if solve_for_y else gx
    t = Jet1.identity(degree)
    rho = np.zeros(degree + 1)
    psi_jet = psi_jet.with_constant(0.0)  # base point sits on the curve
    for p in range(1, degree + 1):
        if solve_for_y:
            phi = compose_bivariate(psi_jet, t, Jet1(rho))
        else:
            phi = compose_bivariate(psi_jet, Jet1(rho), t)
        rho[p] = -phi.coeffs[p] / pivot
    if solve_for_y:
        r, s = t, Jet1(rho)
    else:
        r, s = Jet1(rho), t
    d = float(s.coeffs[1]) * gx - float(r.coeffs[1]) * gy
    orient = 1.0 if d > 0.0 else -1.0
    return CurveChart(x_star, y_star, r, s, orient)
