"""Problem files, refinement studies, error metrics and tables.

Problem files are line-oriented ``key = expression`` text (see README for the
grammar).  Required keys: l1, l2, l3, l4, psi, f_plus, f_minus, g, g1, plus
either g0 or both of u_plus/u_minus; '#' starts a comment; unknown keys are
rejected.  When the exact solution is supplied, Dirichlet data is evaluated
from it by side of psi, which also covers interfaces that cross the boundary
(a single smooth g0 cannot represent two-sided boundary data).

A refinement study solves on grids h = (l2-l1)/2^J for a range of J and
reports the paper-style table: relative l2 and absolute l-infinity errors,
against the exact solution when known and against the next finer level
otherwise, with observed orders between consecutive rows.
"""

from __future__ import annotations

import importlib.resources
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import expr as expr_mod
from .expr import Expr, ExpressionSyntaxError, eval_scalar, parse
from .geometry import Classification, Grid, classify
from .solver import ProblemData, assemble, condition_number, solve

__all__ = [
    "ProblemSpec",
    "ConvergenceRow",
    "Solution",
    "MissingKey",
    "UnknownKey",
    "ConvergenceAborted",
    "load_problem",
    "loads_problem",
    "bundled_problem_path",
    "solve_problem",
    "run_convergence",
    "emit_table",
    "parse_table",
]

_BOUND_KEYS = ("l1", "l2", "l3", "l4")
_EXPR_KEYS = ("psi", "f_plus", "f_minus", "g", "g0", "g1", "u_plus", "u_minus")
_ALL_KEYS = ("format",) + _BOUND_KEYS + _EXPR_KEYS


class MissingKey(KeyError):
    def __init__(self, key: str):
        super().__init__(key)
        self.key = key

    def __str__(self):
        return f"problem file is missing required key {self.key!r}"


class UnknownKey(ValueError):
    pass


class ConvergenceAborted(RuntimeError):
    """A refinement level failed; `rows` holds the levels that completed."""

    def __init__(self, message: str, rows):
        super().__init__(message)
        self.rows = rows


@dataclass(frozen=True)
class ProblemSpec:
    """A parsed problem instance; expressions are immutable ASTs."""

    l1: float
    l2: float
    l3: float
    l4: float
    psi: Expr
    f_plus: Expr
    f_minus: Expr
    g: Expr
    g1: Expr
    g0: Expr | None = None
    u_plus: Expr | None = None
    u_minus: Expr | None = None
    name: str = ""

    @property
    def has_exact(self) -> bool:
        return self.u_plus is not None and self.u_minus is not None

    def grid(self, J: int) -> Grid:
        return Grid(self.l1, self.l2, self.l3, self.l4, 2**J)

    def dirichlet_values(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Boundary data: exact solution by side when known, else g0."""
        if self.has_exact:
            side = np.asarray(eval_scalar(self.psi, x, y), dtype=float) >= 0.0
            up = np.broadcast_to(np.asarray(eval_scalar(self.u_plus, x, y), dtype=float), side.shape)
            um = np.broadcast_to(np.asarray(eval_scalar(self.u_minus, x, y), dtype=float), side.shape)
            return np.where(side, up, um)
        vals = np.asarray(eval_scalar(self.g0, x, y), dtype=float)
        return np.broadcast_to(vals, np.broadcast_shapes(np.shape(x), np.shape(y)))

    def data(self) -> ProblemData:
        return ProblemData(
            psi=self.psi,
            f_plus=self.f_plus,
            f_minus=self.f_minus,
            g1=self.g1,
            g=self.g,
            dirichlet=self.dirichlet_values,
        )

    def exact_values(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        if not self.has_exact:
            raise ValueError("problem has no exact solution")
        side = np.asarray(eval_scalar(self.psi, x, y), dtype=float) >= 0.0
        up = np.broadcast_to(np.asarray(eval_scalar(self.u_plus, x, y), dtype=float), side.shape)
        um = np.broadcast_to(np.asarray(eval_scalar(self.u_minus, x, y), dtype=float), side.shape)
        return np.where(side, up, um)

    def g0_consistency(self, samples: int = 200) -> float:
        """Max |g0 - exact boundary data| over boundary samples (both given)."""
        if self.g0 is None or not self.has_exact:
            raise ValueError("needs both g0 and the exact solution")
        t = np.linspace(0.0, 1.0, samples)
        xs = np.r_[self.l1 + t * (self.l2 - self.l1), np.full_like(t, self.l1),
                   np.full_like(t, self.l2), self.l1 + t * (self.l2 - self.l1)]
        ys = np.r_[np.full_like(t, self.l3), self.l3 + t * (self.l4 - self.l3),
                   self.l3 + t * (self.l4 - self.l3), np.full_like(t, self.l4)]
        g0v = np.broadcast_to(np.asarray(eval_scalar(self.g0, xs, ys), dtype=float), xs.shape)
        return float(np.max(np.abs(g0v - self.exact_values(xs, ys))))


def _parse_bound(text: str, line_no: int) -> float:
    node = parse(text)
    if expr_mod.free_variables(node):
        raise ExpressionSyntaxError(
            f"line {line_no}: domain bound must be constant", 0
        )
    return float(eval_scalar(node, 0.0, 0.0))


def loads_problem(text: str, name: str = "<string>") -> ProblemSpec:
    """Parse problem text (see :func:`load_problem`)."""
    raw: dict[str, tuple[str, int]] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ExpressionSyntaxError(f"line {line_no}: expected 'key = value'", 0)
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if key not in _ALL_KEYS:
            raise UnknownKey(f"line {line_no}: unknown key {key!r}")
        if key in raw:
            raise UnknownKey(f"line {line_no}: duplicate key {key!r}")
        if not value:
            raise ExpressionSyntaxError(f"line {line_no}: empty value for {key!r}", 0)
        raw[key] = (value, line_no)

    if "format" in raw:
        value, line_no = raw.pop("format")
        if value.strip() != "1":
            raise UnknownKey(f"line {line_no}: unsupported format {value!r}")

    fields: dict[str, object] = {"name": name}
    for key in _BOUND_KEYS:
        if key not in raw:
            raise MissingKey(key)
        value, line_no = raw.pop(key)
        fields[key] = _parse_bound(value, line_no)
    for key in _EXPR_KEYS:
        if key in raw:
            value, line_no = raw.pop(key)
            try:
                fields[key] = parse(value)
            except ExpressionSyntaxError as exc:
                raise ExpressionSyntaxError(
                    f"line {line_no}: {key}: {exc.args[0]}", exc.position
                ) from exc
    for key in ("psi", "f_plus", "f_minus", "g", "g1"):
        if key not in fields:
            raise MissingKey(key)
    spec = ProblemSpec(**fields)
    if spec.g0 is None and not spec.has_exact:
        raise MissingKey("g0")
    return spec


def load_problem(path) -> ProblemSpec:
    """Load a problem file; raises OSError, SyntaxError (with line numbers),
    MissingKey, or UnknownKey."""
    path = Path(path)
    return loads_problem(path.read_text(), name=path.stem)


def bundled_problem_path(name: str) -> Path:
    """Path of a bundled example, e.g. 'ex01' or 'ex01.prob'."""
    if not name.endswith(".prob"):
        name += ".prob"
    return Path(importlib.resources.files("ifd6.problems") / name)


@dataclass(frozen=True)
class Solution:
    grid: Grid
    classification: Classification
    operator: "object"
    values: np.ndarray  # flat, j outer / i inner
    residual: float
    seconds: float

    def grid_values(self) -> np.ndarray:
        """Values indexed [i-1, j-1]."""
        return self.values.reshape(self.grid.n2 - 1, self.grid.n1 - 1).T


def solve_problem(
    spec: ProblemSpec,
    J: int,
    M: int = 6,
    method: str = "direct",
    tol: float = 1e-14,
) -> Solution:
    t0 = time.perf_counter()
    grid = spec.grid(J)
    classification = classify(grid, spec.psi)
    op, rhs = assemble(grid, classification, spec.data(), M)
    values = solve(op, rhs, method=method, tol=tol)
    nb = np.linalg.norm(rhs)
    residual = float(np.linalg.norm(rhs - op.apply(values)) / nb) if nb else 0.0
    return Solution(grid, classification, op, values, residual, time.perf_counter() - t0)


@dataclass
class ConvergenceRow:
    J: int
    e2_exact: float | None = None
    order2_exact: float | None = None
    einf_exact: float | None = None
    orderinf_exact: float | None = None
    e2_succ: float | None = None
    order2_succ: float | None = None
    einf_succ: float | None = None
    orderinf_succ: float | None = None
    kappa: float | None = None
    seconds: float | None = None


def _order(prev: float | None, cur: float | None) -> float | None:
    if prev is None or cur is None or prev <= 0.0 or cur <= 0.0:
        return None
    return float(np.log2(prev / cur))


def run_convergence(
    spec: ProblemSpec,
    j_min: int,
    j_max: int,
    M: int = 6,
    method: str = "direct",
    tol: float = 1e-14,
    kappa: bool = False,
) -> list[ConvergenceRow]:
    """Solve at J = j_min..j_max and tabulate errors and observed orders.

    Successive-error columns at level J compare with the J+1 solution on
    coinciding nodes, so they exist for J < j_max only.  The order printed on
    a row compares that row's error with the previous row's.
    """
    if j_min < 2:
        raise ValueError("j_min must be at least 2")
    if j_max > 9:
        raise ValueError("j_max must be at most 9 (desk scale)")
    if j_min > j_max:
        raise ValueError("need j_min <= j_max")

    rows: list[ConvergenceRow] = []
    solutions: list[Solution] = []
    for J in range(j_min, j_max + 1):
        try:
            sol = solve_problem(spec, J, M=M, method=method, tol=tol)
        except Exception as exc:
            _fill_successive(rows, solutions)
            raise ConvergenceAborted(f"level J={J} failed: {exc}", rows) from exc
        row = ConvergenceRow(J=J, seconds=sol.seconds)
        if spec.has_exact:
            grid = sol.grid
            xi = grid.xs()[1:-1][:, None]
            yj = grid.ys()[1:-1][None, :]
            exact = np.broadcast_to(spec.exact_values(xi, yj), (grid.n1 - 1, grid.n2 - 1))
            diff = sol.grid_values() - exact
            row.e2_exact = float(
                np.linalg.norm(diff) / np.linalg.norm(exact)
            )
            row.einf_exact = float(np.max(np.abs(diff)))
            if rows:
                row.order2_exact = _order(rows[-1].e2_exact, row.e2_exact)
                row.orderinf_exact = _order(rows[-1].einf_exact, row.einf_exact)
        if kappa:
            row.kappa = condition_number(sol.operator)
        rows.append(row)
        solutions.append(sol)
    _fill_successive(rows, solutions)
    return rows


def _fill_successive(rows, solutions):
    for k in range(len(solutions) - 1):
        coarse = solutions[k].grid_values()
        fine = solutions[k + 1].grid_values()[1::2, 1::2]
        diff = coarse - fine
        rows[k].e2_succ = float(np.linalg.norm(diff) / np.linalg.norm(fine))
        rows[k].einf_succ = float(np.max(np.abs(diff)))
    for k in range(1, len(rows)):
        rows[k].order2_succ = _order(rows[k - 1].e2_succ, rows[k].e2_succ)
        rows[k].orderinf_succ = _order(rows[k - 1].einf_succ, rows[k].einf_succ)


_COLUMNS = (
    ("e2_exact", "order2_exact", "einf_exact", "orderinf_exact"),
    ("e2_succ", "order2_succ", "einf_succ", "orderinf_succ"),
)


def _fmt(value, is_order: bool) -> str:
    if value is None:
        return ""
    return f"{value:.3f}" if is_order else f"{value:.2E}"


def _table_columns(rows):
    has_exact = any(r.e2_exact is not None for r in rows)
    has_kappa = any(r.kappa is not None for r in rows)
    cols = ["J"]
    if has_exact:
        cols += list(_COLUMNS[0])
    cols += list(_COLUMNS[1])
    if has_kappa:
        cols.append("kappa")
    return cols


def emit_table(rows, fmt: str = "csv") -> str:
    """Render rows as CSV or Markdown; errors x.xxE+yy, orders to 3 decimals."""
    cols = _table_columns(rows)

    def cell(row, name):
        if name == "J":
            return str(row.J)
        value = getattr(row, name)
        if name == "kappa":
            return _fmt(value, False)
        # first row's orders print as 0 like the reference tables
        if "order" in name and value is None:
            partner = name.replace("order2", "e2").replace("orderinf", "einf")
            return "0" if getattr(row, partner) is not None else ""
        return _fmt(value, "order" in name)

    lines = []
    if fmt == "csv":
        lines.append(",".join(cols))
        for row in rows:
            lines.append(",".join(cell(row, c) for c in cols))
    elif fmt == "md":
        lines.append("| " + " | ".join(cols) + " |")
        lines.append("|" + "|".join("---" for _ in cols) + "|")
        for row in rows:
            lines.append("| " + " | ".join(cell(row, c) or " " for c in cols) + " |")
    else:
        raise ValueError(f"unknown table format {fmt!r}")
    return "\n".join(lines) + "\n"


def parse_table(text: str) -> list[ConvergenceRow]:
    """Inverse of emit_table for CSV output (values as printed)."""
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    header = lines[0].split(",")
    rows = []
    for ln in lines[1:]:
        row = ConvergenceRow(J=0)
        for name, cell in zip(header, ln.split(",")):
            if name == "J":
                row.J = int(cell)
            elif cell != "":
                setattr(row, name, float(cell))
        # normalize printed leading zeros back to None like fresh rows
        for name in ("order2_exact", "orderinf_exact", "order2_succ", "orderinf_succ"):
            if getattr(row, name) == 0.0 and rows == []:
                setattr(row, name, None)
        rows.append(row)
    return rows


def dump_solution(sol: Solution, path) -> None:
    """Plain-text dump: header (N1, N2, bounds), then row-major values."""
    grid = sol.grid
    with open(path, "w") as fh:
        fh.write("# ifd6 solution dump, format 1\n")
        fh.write(f"N1 {grid.n1}\n")
        fh.write(f"N2 {grid.n2}\n")
        fh.write(f"bounds {grid.l1!r} {grid.l2!r} {grid.l3!r} {grid.l4!r}\n")
        for v in sol.values:
            fh.write(f"{v!r}\n")
