"""Risk-bounded trajectory and tube planning with sum-of-squares certificates."""

from .cert import Certificate, SolverConfig, Status, verify_segment, verify_tube
from .contour import FreeSpace, Obstacle, RiskContour, build_contour
from .dist import Beta, Gaussian, MomentTable, Uniform, expectation, raw_moment
from .plan import NoPathFound, PlanRequest, PlannerConfig, rrt_sos_dynamic, rrt_sos_static, shortcut
from .poly import Polynomial, parse
from .scenario import Scenario, load_scenario
from .trajectory import PiecewiseLinearTrajectory, PolynomialTrajectory, trajectory_length
from .tube import Tube, TubeSearchConfig, build_tube, plan_with_tube

__version__ = "0.1.0"

__all__ = [
    "Beta", "Certificate", "FreeSpace", "Gaussian", "MomentTable", "NoPathFound", "Obstacle",
    "PiecewiseLinearTrajectory", "PlanRequest", "PlannerConfig", "Polynomial",
    "PolynomialTrajectory", "RiskContour", "Scenario", "SolverConfig", "Status", "Tube",
    "TubeSearchConfig", "Uniform", "build_contour", "build_tube", "expectation", "load_scenario",
    "parse", "plan_with_tube", "raw_moment", "rrt_sos_dynamic", "rrt_sos_static", "shortcut",
    "trajectory_length", "verify_segment", "verify_tube",
]
