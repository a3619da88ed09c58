"""Dense LP and SDP interior-point solvers."""

from .lp import INFEASIBLE, OPTIMAL, UNBOUNDED, LpProblem, LpSolution, solve_lp
from .sdp import MatrixVariable, SdpProblem, SdpSolution, solve_sdp

__all__ = [
    "INFEASIBLE", "OPTIMAL", "UNBOUNDED",
    "LpProblem", "LpSolution", "solve_lp",
    "MatrixVariable", "SdpProblem", "SdpSolution", "solve_sdp",
]
