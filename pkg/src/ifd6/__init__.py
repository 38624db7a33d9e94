"""Sixth-order compact finite differences for the 2-D Poisson interface problem.

Solves -lap(u) = f on a rectangle cut by a smooth level-set curve, with
Dirichlet data and prescribed jumps [u] = g1 and [grad(u) . n] = g across the
curve, on uniform Cartesian grids with one constant 9-point stencil.
"""

from .expr import DomainError, ExpressionSyntaxError, UnknownIdentifier, eval_scalar, parse
from .geometry import (
    BasePointAmbiguous,
    BasePointNotFound,
    CurveChart,
    DegenerateGradient,
    Grid,
    classify,
    find_base_point,
    local_chart,
)
from .harness import (
    ConvergenceAborted,
    ConvergenceRow,
    MissingKey,
    ProblemSpec,
    bundled_problem_path,
    emit_table,
    load_problem,
    run_convergence,
    solve_problem,
)
from .jets import DivisionByZeroConstantTerm, Jet1, Jet2, NonzeroCurveOrigin
from .scheme import SingularTransmission, irregular_rhs, regular_rhs, transmission
from .solver import NonConvergence, ProblemData, SystemOperator, assemble, condition_number, solve

__version__ = "0.1.0"
