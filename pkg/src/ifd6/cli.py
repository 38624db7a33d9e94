"""Command line interface.

    ifd6 solve    --problem FILE --J n    [--order M] [--solver direct|cg]
                  [--tol t] [--out csv|md] [--kappa] [--dump-solution FILE]
    ifd6 converge --problem FILE --Jmin a --Jmax b  [same options]

Exit codes: 0 success, 1 usage error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import harness
from .expr import DomainError
from .geometry import BasePointAmbiguous, BasePointNotFound, DegenerateGradient
from .scheme import SingularTransmission
from .solver import NonConvergence

_NUMERICAL_ERRORS = (
    NonConvergence,
    BasePointNotFound,
    BasePointAmbiguous,
    DegenerateGradient,
    SingularTransmission,
    DomainError,
    FloatingPointError,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--problem", required=True, help="problem file path")
    p.add_argument("--order", type=int, default=6, choices=(3, 4, 5, 6),
                   metavar="M", help="accuracy order (default 6)")
    p.add_argument("--solver", choices=("direct", "cg"), default="direct")
    p.add_argument("--tol", type=float, default=1e-14,
                   help="cg relative residual tolerance")
    p.add_argument("--out", choices=("csv", "md"), default="csv",
                   help="table format")
    p.add_argument("--kappa", action="store_true",
                   help="estimate the matrix condition number")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ifd6", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_solve = sub.add_parser("solve", help="solve at a single refinement level")
    _add_common(p_solve)
    p_solve.add_argument("--J", type=int, required=True, help="refinement level")
    p_solve.add_argument("--dump-solution", metavar="FILE",
                         help="write the solution values to FILE")
    p_conv = sub.add_parser("converge", help="run a refinement study")
    _add_common(p_conv)
    p_conv.add_argument("--Jmin", type=int, required=True)
    p_conv.add_argument("--Jmax", type=int, required=True)
    return parser


def _cmd_solve(args) -> int:
    spec = harness.load_problem(args.problem)
    sol = harness.solve_problem(
        spec, args.J, M=args.order, method=args.solver, tol=args.tol
    )
    row = harness.ConvergenceRow(J=args.J, seconds=sol.seconds)
    if spec.has_exact:
        grid = sol.grid
        xi = grid.xs()[1:-1][:, None]
        yj = grid.ys()[1:-1][None, :]
        exact = np.broadcast_to(
            spec.exact_values(xi, yj), (grid.n1 - 1, grid.n2 - 1)
        )
        diff = sol.grid_values() - exact
        row.e2_exact = float(np.linalg.norm(diff) / np.linalg.norm(exact))
        row.einf_exact = float(np.max(np.abs(diff)))
    if args.kappa:
        from .solver import condition_number

        row.kappa = condition_number(sol.operator)
    print(harness.emit_table([row], args.out), end="")
    print(f"# residual {sol.residual:.3e}, {sol.seconds:.3f}s", file=sys.stderr)
    if args.dump_solution:
        harness.dump_solution(sol, args.dump_solution)
    return 0


def _cmd_converge(args) -> int:
    spec = harness.load_problem(args.problem)
    try:
        rows = harness.run_convergence(
            spec,
            args.Jmin,
            args.Jmax,
            M=args.order,
            method=args.solver,
            tol=args.tol,
            kappa=args.kappa,
        )
    except harness.ConvergenceAborted as exc:
        if exc.rows:
            print(harness.emit_table(exc.rows, args.out), end="")
        print(f"ifd6: error: {exc}", file=sys.stderr)
        return 2
    print(harness.emit_table(rows, args.out), end="")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "solve":
            return _cmd_solve(args)
        return _cmd_converge(args)
    except _NUMERICAL_ERRORS as exc:
        print(f"ifd6: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (OSError, SyntaxError, KeyError, ValueError) as exc:
        print(f"ifd6: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
