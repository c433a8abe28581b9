"""In-house solver for smooth convex programs with linear equalities."""

from .barrier import InfeasibleError, SolverOptions, check_gradients, phase_one, solve
from .program import (
    CallableObjective,
    ConstraintBlock,
    LinearInequalities,
    LinearObjective,
    Objective,
    QuadraticObjective,
    ScalarConstraint,
    SmoothConvexProgram,
    SolveReport,
)

__all__ = [
    "InfeasibleError",
    "SolverOptions",
    "check_gradients",
    "phase_one",
    "solve",
    "CallableObjective",
    "ConstraintBlock",
    "LinearInequalities",
    "LinearObjective",
    "Objective",
    "QuadraticObjective",
    "ScalarConstraint",
    "SmoothConvexProgram",
    "SolveReport",
]
