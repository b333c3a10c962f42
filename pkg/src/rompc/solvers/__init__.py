from .lp import (INFEASIBLE, MAX_ITER, OPTIMAL, UNBOUNDED, LinearProgram, SolveStatus,
                 solve_lp)
from .qp import QpWorkspace, QuadraticProgram, projected_gradient_norm, solve_qp

__all__ = ["LinearProgram", "QuadraticProgram", "SolveStatus", "QpWorkspace", "solve_lp", "solve_qp",
           "projected_gradient_norm", "OPTIMAL", "INFEASIBLE", "UNBOUNDED", "MAX_ITER"]
