"""Exact aggregation of EV charging flexibility with UL-flexibility sets.

Each EV's feasible charging signals over a window are captured by two
length-T vectors ``u`` and ``l``; fleets aggregate by adding them.
"""

from .errors import FlexError, Infeasible
from .flexcore import (
    DEFAULT_TOL,
    EVParams,
    FeasibilityReport,
    ULFlex,
    Violation,
    Window,
    check_feasible_ordered,
    constant_witness,
    minkowski_sum,
    ul_from_ev,
    validate_ul,
)
from .polytope import HRep, build_hrep, canonical_vertices, enumerate_permutations, support
from .lpcore import LPProblem, LPSolution, solve
from .disagg import Fleet, disaggregate, exactness_oracle
from .bench import BenchConfig, max_capacity_direct, max_capacity_ul, run_benchmark

__all__ = [
    "DEFAULT_TOL", "FlexError", "Infeasible", "EVParams", "FeasibilityReport", "ULFlex",
    "Violation", "Window", "check_feasible_ordered", "constant_witness", "minkowski_sum",
    "ul_from_ev", "validate_ul", "HRep", "build_hrep", "canonical_vertices",
    "enumerate_permutations", "support", "LPProblem", "LPSolution", "solve", "Fleet",
    "disaggregate", "exactness_oracle", "BenchConfig", "max_capacity_direct",
    "max_capacity_ul", "run_benchmark",
]
