"""
Adaptive mixed finite element solver for steady Bingham flow with
iterative linearisation of the regularised constitutive law.
"""

from .mesh import Triangulation, build_structured_unit_square, refine, \
    uniform_refine
from .spaces import FieldPair, build_taylor_hood, transfer_pair
from .rheology import RegularisedLaw, graph_bound_eta
from .forms import assemble_a_n, assemble_b, assemble_load, dual_norm_ic, \
    dual_norm_pde, energy, residual_pair
from .solvers import InnerLoopReport, SolverConfig, inner_loop, \
    kacanov_step, kacanov_convective_step, solve_saddle, zarantonello_step
from .estimators import element_indicators, global_estimator, \
    mark_doerfler, mark_maximum
from .adaptive import AdaptiveConfig, AdaptiveRecord, AdaptiveState, \
    ailfem_run, error_report, experiment_channel, experiment_convective, \
    run_experiment, zeta
from .config import ConfigError, RunConfig, describe_defaults, \
    parse_config, serialize_config

__version__ = "0.1.0"

__all__ = [
    "Triangulation", "build_structured_unit_square", "refine",
    "uniform_refine",
    "FieldPair", "build_taylor_hood", "transfer_pair",
    "RegularisedLaw", "graph_bound_eta",
    "assemble_a_n", "assemble_b", "assemble_load", "dual_norm_ic",
    "dual_norm_pde", "energy", "residual_pair",
    "InnerLoopReport", "SolverConfig", "inner_loop", "kacanov_step",
    "kacanov_convective_step", "solve_saddle", "zarantonello_step",
    "element_indicators", "global_estimator", "mark_doerfler",
    "mark_maximum",
    "AdaptiveConfig", "AdaptiveRecord", "AdaptiveState", "ailfem_run",
    "error_report", "experiment_channel", "experiment_convective",
    "run_experiment", "zeta",
    "ConfigError", "RunConfig", "describe_defaults", "parse_config",
    "serialize_config",
    "__version__",
]
