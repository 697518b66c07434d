"""Time-discrete solvers and residual checks for parabolic quasi-variational
inequalities with unknown-dependent moving convex constraints."""
__version__ = "0.1.0"

from .spaces import (SpaceMetric, TimeGrid, dual_norm, duality_map, h_inner, h_norm, pairing,
                     time_pairing, v_norm)
from .parameters import (PdeParameter, PiecewiseLinear, ScalarParameter, SweepParameter,
                         theta_distance)
from .constraints import (CircleSegment, GradientBall, HalfLine, TransformationMap, member,
                          mosco_gap, project, rotation_apply, transform)
from .semimonotone import PLaplacian, ScalarMonotone, ZeroOperator, apply, bound_probe, monotonicity_probe
from .evolution import StepMode, catching_up_solve, contraction_check, implicit_step, weak_residual
from .feedback import (HeatRobin, ScalarProjection, SweepDynamics, lambda_continuity_probe,
                       lambda_pde, lambda_scalar, lambda_sweep)
from .qvi import QviProblem, QviSolution, fixed_point_solve, multi_seed_explore
