"""Global linear system: assembly, direct/CG solves, condition number.

The coefficient matrix is the same constant 9-point operator for every
problem on a given grid; only the right-hand side carries the source terms,
jump data, interface curve and Dirichlet values.  The operator is applied
matrix-free for iterative work and materialized as a sparse matrix once for
factorization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import geometry, scheme
from .expr import Expr, eval_jet2, eval_scalar
from .geometry import Classification, Grid, chart_from_jet, find_base_point
from .jets import Jet2
from .scheme import STENCIL_WEIGHTS, data_basis, irregular_rhs, regular_rhs

__all__ = [
    "SystemOperator",
    "ProblemData",
    "assemble",
    "solve",
    "condition_number",
    "NonConvergence",
]


class NonConvergence(RuntimeError):
    """An iteration (CG, norm estimate, refinement) failed to converge."""


class SystemOperator:
    """The constant compact 9-point operator with Dirichlet closure.

    Unknowns are the interior nodes, ordered row-major with j outer and i
    inner.  Instances for equal grids are interchangeable; `descriptor()`
    serializes the identity.
    """

    def __init__(self, n1: int, n2: int):
        self.n1 = n1
        self.n2 = n2
        self.size = (n1 - 1) * (n2 - 1)
        self._sparse = None
        self._lu = None

    def descriptor(self) -> str:
        weights = ",".join(repr(w) for w in STENCIL_WEIGHTS.ravel())
        return f"compact9;n1={self.n1};n2={self.n2};weights=[{weights}]"

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Matrix-free A @ x with zero (eliminated) Dirichlet boundary."""
        nx, ny = self.n1 - 1, self.n2 - 1
        padded = np.zeros((ny + 2, nx + 2))
        padded[1:-1, 1:-1] = x.reshape(ny, nx)
        out = np.zeros((ny, nx))
        for k in (-1, 0, 1):
            for l in (-1, 0, 1):
                w = STENCIL_WEIGHTS[k + 1, l + 1]
                out += w * padded[1 + l : ny + 1 + l, 1 + k : nx + 1 + k]
        return out.ravel()

    def sparse(self) -> sp.csc_matrix:
        if self._sparse is None:
            tx = sp.diags(
                [np.ones(self.n1 - 2), 4.0 * np.ones(self.n1 - 1), np.ones(self.n1 - 2)],
                [-1, 0, 1],
            )
            ty = sp.diags(
                [np.ones(self.n2 - 2), 4.0 * np.ones(self.n2 - 1), np.ones(self.n2 - 2)],
                [-1, 0, 1],
            )
            self._sparse = (sp.kron(ty, tx) - 36.0 * sp.identity(self.size)).tocsc()
        return self._sparse

    def lu(self):
        if self._lu is None:
            self._lu = spla.splu(self.sparse())
        return self._lu

    def fold_boundary(self, boundary: np.ndarray) -> np.ndarray:
        """Stencil contributions of boundary node values to interior rows.

        `boundary` is a full (n1+1, n2+1) node array, zero at interior nodes.
        """
        n1, n2 = self.n1, self.n2
        out = np.zeros((n1 - 1, n2 - 1))
        for k in (-1, 0, 1):
            for l in (-1, 0, 1):
                w = STENCIL_WEIGHTS[k + 1, l + 1]
                out += w * boundary[1 + k : n1 + k, 1 + l : n2 + l]
        return out.T.ravel()


@dataclass(frozen=True)
class ProblemData:
    """Everything assembly needs: data expressions plus boundary values."""

    psi: Expr
    f_plus: Expr
    f_minus: Expr
    g1: Expr
    g: Expr
    dirichlet: Callable  # (x: ndarray, y: ndarray) -> ndarray


def _with_point(exc: Exception, i: int, j: int, x: float, y: float):
    raise type(exc)(f"{exc} [grid point ({i}, {j}) = ({x:.6g}, {y:.6g})]") from exc


def assemble(
    grid: Grid,
    classification: Classification,
    data: ProblemData,
    M: int,
) -> tuple[SystemOperator, np.ndarray]:
    """Build the constant operator and the per-point right-hand side."""
    op = SystemOperator(grid.n1, grid.n2)
    h = grid.h
    rhs_grid = np.zeros((grid.n1 - 1, grid.n2 - 1))  # indexed [i-1, j-1]

    # regular rows, one batch per side
    xi = grid.xs()[1:-1][:, None]
    yj = grid.ys()[1:-1][None, :]
    centers_plus = classification.node_plus[1:-1, 1:-1]
    regular = ~classification.irregular
    for plus_side, f_expr in ((True, data.f_plus), (False, data.f_minus)):
        mask = regular & (centers_plus == plus_side)
        if np.any(mask):
            xs = np.broadcast_to(xi, mask.shape)[mask]
            ys = np.broadcast_to(yj, mask.shape)[mask]
            jx, jy = Jet2.seed_xy(xs, ys, 4)
            f_jet = eval_jet2(f_expr, jx, jy)
            rhs_grid[mask] = regular_rhs(f_jet, h, M)

    # irregular rows
    points = classification.irregular_points
    if points:
        bases = []
        partitions = []
        for (i, j) in points:
            try:
                bases.append(find_base_point(grid, data.psi, i, j))
                partitions.append(classification.partition(i, j))
            except Exception as exc:  # attach location, re-raise same type
                _with_point(exc, i, j, grid.x(i), grid.y(j))
        bx = np.array([b[0] for b in bases])
        by = np.array([b[1] for b in bases])
        degree = M + 2
        jx, jy = Jet2.seed_xy(bx, by, degree)
        psi_jets = eval_jet2(data.psi, jx, jy)
        packed = data_basis(M).pack(
            eval_jet2(data.f_plus, jx, jy),
            eval_jet2(data.f_minus, jx, jy),
            eval_jet2(data.g1, jx, jy),
            eval_jet2(data.g, jx, jy),
        )
        packed = np.broadcast_to(packed, (len(points), data_basis(M).size))
        for k, (i, j) in enumerate(points):
            try:
                chart = chart_from_jet(
                    Jet2(degree, psi_jets.coeffs[k]), bases[k], M
                )
                dplus, dminus = partitions[k]
                v0 = grid.x(i) - bases[k][0]
                w0 = grid.y(j) - bases[k][1]
                rhs_grid[i - 1, j - 1] = irregular_rhs(
                    chart, dplus, dminus, v0, w0, h, packed[k], M
                )
            except Exception as exc:
                _with_point(exc, i, j, grid.x(i), grid.y(j))

    rhs = rhs_grid.T.ravel()

    # fold Dirichlet data into the right-hand side
    boundary = np.zeros((grid.n1 + 1, grid.n2 + 1))
    xs, ys = grid.xs(), grid.ys()
    boundary[0, :] = data.dirichlet(np.full_like(ys, xs[0]), ys)
    boundary[-1, :] = data.dirichlet(np.full_like(ys, xs[-1]), ys)
    boundary[:, 0] = data.dirichlet(xs, np.full_like(xs, ys[0]))
    boundary[:, -1] = data.dirichlet(xs, np.full_like(xs, ys[-1]))
    rhs = rhs - op.fold_boundary(boundary)
    return op, rhs


def solve(
    op: SystemOperator,
    b: np.ndarray,
    method: str = "direct",
    tol: float = 1e-14,
) -> np.ndarray:
    """Solve A x = b by sparse LU (with refinement) or matrix-free CG."""
    if method == "direct":
        return _solve_direct(op, b)
    if method == "cg":
        return _solve_cg(op, b, tol)
    raise ValueError(f"unknown method {method!r}")


def _solve_direct(op: SystemOperator, b: np.ndarray) -> np.ndarray:
    lu = op.lu()
    x = lu.solve(b)
    norm_b = np.linalg.norm(b)
    if norm_b == 0.0:
        return np.zeros_like(b)
    for _ in range(5):
        r = b - op.apply(x)
        if np.linalg.norm(r) <= 1e-13 * norm_b:
            return x
        x = x + lu.solve(r)
    r = b - op.apply(x)
    if np.linalg.norm(r) > 1e-13 * norm_b:
        raise NonConvergence("iterative refinement stalled above 1e-13 residual")
    return x


def _solve_cg(op: SystemOperator, b: np.ndarray, tol: float) -> np.ndarray:
    """Conjugate gradients on the negated (positive definite) system."""
    if tol <= 0.0:
        raise ValueError("cg tolerance must be positive")
    bn = -b
    norm_b = np.linalg.norm(bn)
    x = np.zeros_like(bn)
    if norm_b == 0.0:
        return x
    r = bn.copy()
    p = r.copy()
    rs = float(r @ r)
    maxiter = 50 * op.n1
    for it in range(1, maxiter + 1):
        ap = -op.apply(p)
        alpha = rs / float(p @ ap)
        x += alpha * p
        r -= alpha * ap
        if it % 64 == 0:
            r = bn - (-op.apply(x))  # periodically refresh the true residual
        rs_new = float(r @ r)
        if math.sqrt(rs_new) <= tol * norm_b:
            true_res = np.linalg.norm(bn - (-op.apply(x)))
            if true_res <= 10 * tol * norm_b:
                return x
            r = bn - (-op.apply(x))
            rs_new = float(r @ r)
        p = r + (rs_new / rs) * p
        rs = rs_new
    raise NonConvergence(f"cg did not reach tol={tol:g} within {maxiter} iterations")


def condition_number(op: SystemOperator) -> float:
    """1-norm condition number of the operator, ||A||_1 * est ||A^-1||_1.

    ||A||_1 is exact; ||A^-1||_1 uses Hager-style estimation driven by the
    direct factorization.
    """
    a1 = float(np.abs(op.sparse()).sum(axis=0).max())
    lu = op.lu()
    n = op.size
    x = np.full(n, 1.0 / n)
    gamma = 0.0
    visited = set()
    for _ in range(50):
        y = lu.solve(x)
        gamma = float(np.abs(y).sum())
        xi = np.sign(y)
        xi[xi == 0.0] = 1.0
        z = lu.solve(xi)  # A (hence A^-1) is symmetric
        j = int(np.argmax(np.abs(z)))
        if float(np.abs(z[j])) <= float(z @ x) + 1e-15 * abs(float(z @ x)) or j in visited:
            break
        visited.add(j)
        x = np.zeros(n)
        x[j] = 1.0
    else:
        raise NonConvergence("1-norm estimator did not settle")
    if n > 1:
        alt = np.array([(-1.0) ** i * (1.0 + i / (n - 1)) for i in range(n)])
        gamma = max(gamma, float(np.abs(lu.solve(alt)).sum() / np.abs(alt).sum()))
    return a1 * gamma
