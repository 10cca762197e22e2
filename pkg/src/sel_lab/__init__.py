"""Numerical laboratory for u^alpha |Du|^beta Lap u = f chi{u > 0}."""

from .params import ForcingSpec, ProblemParams, gamma, zeta_cutoff
from .grid import Grid, ScalarField
from .solver import SolverOptions, solve_dirichlet

__version__ = "0.1.0"

__all__ = [
    "ForcingSpec",
    "Grid",
    "ProblemParams",
    "ScalarField",
    "SolverOptions",
    "gamma",
    "solve_dirichlet",
    "zeta_cutoff",
]
