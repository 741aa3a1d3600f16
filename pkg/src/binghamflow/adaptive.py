"""
Outer adaptive driver: alternate inner fixed-point solves with either
mesh refinement or regularisation escalation, whichever the comparison
of the error estimator against the graph-approximation bound selects.
Also defines the two built-in experiment setups and the error report.
"""

from dataclasses import dataclass, field as dfield
import time

import numpy as np

from .estimators import element_indicators, mark_doerfler, mark_maximum
from .mesh import Triangulation, build_structured_unit_square, refine
from .rheology import RegularisedLaw, graph_bound_eta
from .solvers import SolverConfig, inner_loop
from .spaces import (
    build_taylor_hood,
    transfer_pair,
    velocity_gradient_at_qp,
)


def zeta(N, variant="inverse"):
    """
    Refinement-forcing threshold sequence. The first outer index gets
    +inf so the opening solve is governed by the estimator and graph
    bound alone; afterwards 1/N, or 1/(N+1) for the shifted variant.
    """
    if N < 0:
        raise ValueError("outer index must be nonnegative")
    if variant == "shifted":
        return 1.0 / (N + 1)
    if variant != "inverse":
        raise ValueError("zeta variant must be 'inverse' or 'shifted'")
    if N == 0:
        return float("inf")
    return 1.0 / N


@dataclass
class AdaptiveConfig:
    theta: float = 0.5
    C_graph: float = 4.0
    solver: SolverConfig = dfield(default_factory=SolverConfig)
    max_elements: int = 10000
    max_outer: int = 200
    zeta_variant: str = "inverse"
    initial_m: int = 0
    marking: str = "doerfler"

    def __post_init__(self):
        if not 0.0 < self.theta <= 1.0:
            raise ValueError("theta must be in (0, 1]")
        if self.C_graph <= 0:
            raise ValueError("C_graph must be positive")
        if self.marking not in ("doerfler", "maximum"):
            raise ValueError("marking must be 'doerfler' or 'maximum'")


@dataclass
class AdaptiveRecord:
    step: int
    noe: int
    m: int
    nit: int
    E_pde: float
    E_ic: float
    eta: float
    res_pde: float
    res_ic: float
    error_h1: float = None
    wall_s: float = 0.0
    action: str = ""
    stop_reason: str = ""


@dataclass
class AdaptiveState:
    mesh: Triangulation
    space: object
    law: RegularisedLaw
    pair: object
    N: int = 0
    history: list = dfield(default_factory=list)
    snapshots: list = dfield(default_factory=list)
    inner_traces: list = dfield(default_factory=list)


def _h1_error(space, U, exact_gradient):
    g = velocity_gradient_at_qp(space, U)
    ge = np.asarray(exact_gradient(space.qp_phys[..., 0],
                                   space.qp_phys[..., 1]), dtype=float)
    ge = np.moveaxis(ge, (0, 1), (-2, -1))
    diff = ((g - ge) ** 2).sum(axis=(-2, -1))
    return float(np.sqrt((space.qw_phys * diff).sum()))


def ailfem_run(mesh, law, f, config, dirichlet_data=None, exact_gradient=None,
               keep_snapshots=True, progress=None):
    """
    Run the adaptive loop from an initial mesh and law until the element
    budget or the outer-step budget is reached.

    Every outer step solves the inner loop on the current space, records
    the counters, then either marks and bisects (estimator at least the
    graph bound) or doubles the regularisation exponent (otherwise);
    never both. Fields are carried over exactly on refinement through the
    nested interpolation. progress, when given, is called with each
    record as it is appended.
    """
    law = law.with_m(config.initial_m)
    space = build_taylor_hood(mesh, dirichlet_data)
    # global start is the constant null pair; the first forced inner step
    # imposes the boundary values through the constrained solve
    pair = space.zero_pair()
    state = AdaptiveState(mesh=mesh, space=space, law=law, pair=pair)

    N = 0
    while True:
        t0 = time.perf_counter()
        eta_val = graph_bound_eta(law, config.C_graph)
        thresholds = {
            "estimator_value": lambda p: element_indicators(
                space, law, p.U, p.P, f,
                include_convection=config.solver.include_convection),
            "eta_value": eta_val,
            "zeta_value": zeta(N, config.zeta_variant),
        }
        pair, report = inner_loop(space, law, pair, f, config.solver,
                                  thresholds)
        wall = time.perf_counter() - t0

        ind = report.indicators
        err = None
        if exact_gradient is not None:
            err = _h1_error(space, pair.U, exact_gradient)
        state.history.append(AdaptiveRecord(
            step=N, noe=mesh.num_cells, m=law.m, nit=report.iterations,
            E_pde=ind.E_pde, E_ic=ind.E_ic, eta=eta_val,
            res_pde=report.res_pde, res_ic=report.res_ic,
            error_h1=err, wall_s=wall, stop_reason=report.stop_reason))
        if keep_snapshots:
            state.snapshots.append((mesh, pair.copy()))
        state.inner_traces.append(report.trace)

        N += 1
        done = mesh.num_cells >= config.max_elements or N >= config.max_outer
        if done:
            state.history[-1].action = "stop"
            if progress is not None:
                progress(state.history[-1])
            break

        if ind.E >= eta_val:
            if config.marking == "doerfler":
                marked = mark_doerfler(ind, config.theta)
            else:
                marked = mark_maximum(ind, config.theta)
            new_mesh = refine(mesh, marked)
            new_space = build_taylor_hood(new_mesh, dirichlet_data)
            pair = transfer_pair(space, new_space, pair)
            pair.U[new_space.dirichlet_dofs] = new_space.dirichlet_values
            mesh, space = new_mesh, new_space
            state.history[-1].action = "refine"
        else:
            law = law.with_m(law.m + 1)
            state.history[-1].action = "escalate"
        if progress is not None:
            progress(state.history[-1])

    state.mesh, state.space, state.law, state.pair, state.N = \
        mesh, space, law, pair, N
    return state


def error_report(state, exact_gradient=None):
    """
    Per-outer-step rows (noe, error_h1, estimator quantity), the latter
    being sqrt(E) plus the momentum residual dual norm. Errors come from
    the run records unless an exact gradient is supplied, in which case
    they are recomputed from the stored snapshots.
    """
    errors = [rec.error_h1 for rec in state.history]
    if exact_gradient is not None:
        if not state.snapshots:
            raise ValueError("run kept no snapshots to recompute errors from")
        errors = []
        for mesh, pair in state.snapshots:
            space = build_taylor_hood(mesh)
            errors.append(_h1_error(space, pair.U, exact_gradient))
    rows = []
    for rec, err in zip(state.history, errors):
        rows.append((rec.noe, err, np.sqrt(rec.E_pde + rec.E_ic) + rec.res_pde))
    return rows


@dataclass
class ExperimentSetup:
    name: str
    mesh: Triangulation
    law: RegularisedLaw
    f: object
    dirichlet_data: object
    solver: SolverConfig
    exact_gradient: object = None
    exact_velocity: object = None


def channel_profile(y):
    """Cross-channel speed of the unidirectional exact flow."""
    y = np.asarray(y, dtype=float)
    lower = (0.4 ** 2 - (0.4 - 2.0 * y) ** 2) / 8.0
    upper = (0.4 ** 2 - (0.4 - 2.0 * (1.0 - y)) ** 2) / 8.0
    plug = np.full_like(y, 0.02)
    return np.where(y <= 0.2, lower, np.where(y < 0.8, plug, upper))


def channel_profile_gradient(y):
    """dy-derivative of the channel speed."""
    y = np.asarray(y, dtype=float)
    return np.where(y <= 0.2, 0.2 - y, np.where(y < 0.8, 0.0, 0.8 - y))


def experiment_channel():
    """
    Unidirectional channel flow on the unit square driven by a constant
    horizontal force, with the exact piecewise profile as boundary data.
    Secant-weighted solver without convection; the shear-plane yield
    scaling enters through the norm conversion factor sqrt(2).
    """
    mesh = build_structured_unit_square(4)
    law = RegularisedLaw(sigma=0.3, nu=1.0, m=0, norm_factor=np.sqrt(2.0))

    def f(x, y):
        return np.stack([np.ones_like(x), np.zeros_like(x)])

    def g(x, y):
        return np.stack([channel_profile(y), np.zeros_like(x)])

    def exact_gradient(x, y):
        z = np.zeros_like(x)
        return np.stack([
            np.stack([z, channel_profile_gradient(y)]),
            np.stack([z, z]),
        ])

    def exact_velocity(x, y):
        return np.stack([channel_profile(y), np.zeros_like(x)])

    return ExperimentSetup(
        name="channel",
        mesh=mesh,
        law=law,
        f=f,
        dirichlet_data=g,
        solver=SolverConfig(method="kacanov"),
        exact_gradient=exact_gradient,
        exact_velocity=exact_velocity,
    )


def experiment_convective(method="kacanov_convective"):
    """
    Driven flow with convection on the unit square, homogeneous no-slip
    data and a mixed trigonometric-bilinear force. method selects the
    linearisation: frozen-transport secant weighting or the damped
    gradient step with step size 1/n.
    """
    if method not in ("kacanov_convective", "zarantonello"):
        raise ValueError(
            "method must be 'kacanov_convective' or 'zarantonello'")
    mesh = build_structured_unit_square(4)
    law = RegularisedLaw(sigma=0.3, nu=1.0, m=0, norm_factor=1.0)

    def f(x, y):
        return np.stack([
            np.sin(np.pi * x) * np.cos(np.pi * y)
            - np.cos(np.pi * x) * np.sin(np.pi * y),
            x * y,
        ])

    return ExperimentSetup(
        name="convective",
        mesh=mesh,
        law=law,
        f=f,
        dirichlet_data=None,
        solver=SolverConfig(method=method, delta_rule="adaptive_n"),
    )


def run_experiment(setup, config=None, progress=None, keep_snapshots=True,
                   **overrides):
    """Drive ailfem_run from an ExperimentSetup; overrides patch the config."""
    if config is None:
        config = AdaptiveConfig(solver=setup.solver)
    for key, val in overrides.items():
        if not hasattr(config, key):
            raise ValueError("unknown config field '{}'".format(key))
        setattr(config, key, val)
    return ailfem_run(setup.mesh, setup.law, setup.f, config,
                      dirichlet_data=setup.dirichlet_data,
                      exact_gradient=setup.exact_gradient,
                      keep_snapshots=keep_snapshots, progress=progress)
