"""Time-fractional diffusion: L1 solvers, adjoints and box-constrained optimal control."""

__version__ = "0.1.0"

from .errors import DomainError, FracOptError, ShapeError, SolverError
from .fracops import (FracOrder, TimeMesh, caputo_left, caputo_right, gamma, kernel_k, l1_weights,
                      mittag_leffler, rl_integral_left, rl_integral_right)
from .grid import EigenSystem, SpaceGrid, apply_laplacian, eigensystem, solve_shifted
from .state import StateProblem, Trajectory, mild_residual, solve_state, spectral_oracle, state_operator
from .adjoint import AdjointProblem, solve_adjoint_reversal, solve_adjoint_transpose, transpose_apply
from .cost import (A4Report, CostModel, IntegrandDerivs, check_A4_bounds, eval_cost, eval_derivs,
                   eval_integrand, inner_q, norm_q, quadrature_weights)
from .optimize import (ControlBounds, ControlProblem, OptimizeConfig, OptimizeTrace, linearized_state,
                       project_box, projected_gradient, reduced_gradient, stationarity_residual)
from .kkt import (ActiveSets, CriticalDirection, KKTReport, Multiplier, check_sonc, check_ssc_growth,
                  extract_multiplier, kkt_report, quadratic_form, sample_critical_cone)
