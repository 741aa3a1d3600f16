"""
Command-line front end: run a configured experiment, print the default
configuration, re-emit a finished run's outputs, or render figures.

Output layout per run directory: run_log.csv (one row per outer step),
convergence.csv (plot quantities), iteration_trace.csv (per inner
iteration), fields_final.vtk, and optional per-stride VTK snapshots. A
lock file serialises runs per directory. The BINGHAMFLOW_OUT_ROOT
environment variable reroots relative output directories.
"""

import argparse
import os
import shutil
import sys

import numpy as np

from . import adaptive as ad
from . import report as report_mod
from . import vtkio
from .config import ConfigError, describe_defaults, parse_config
from .mesh import build_structured_unit_square
from .rheology import RegularisedLaw
from .solvers import SolverConfig

OUT_ROOT_ENV = "BINGHAMFLOW_OUT_ROOT"

_LOG_COLUMNS = ("step", "noe", "m", "nit", "E_pde", "E_ic", "eta",
                "res_pde", "res_ic", "error_h1", "wall_s")

_FLOAT = "%.17g"


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return _FLOAT % value
    return str(value)


def run_log_rows(state):
    """run_log.csv lines (header first) from a finished state."""
    lines = [",".join(_LOG_COLUMNS)]
    for rec in state.history:
        lines.append(",".join(_cell(getattr(rec, col))
                              for col in _LOG_COLUMNS))
    return lines


def export_state(state, fmt, directory):
    """
    Write a finished run in one format: csv emits run_log.csv, vtk emits
    the final mesh with fields. Returns the written paths.
    """
    if fmt == "csv":
        path = os.path.join(directory, "run_log.csv")
        _write_lines(path, run_log_rows(state))
        return [path]
    if fmt == "vtk":
        path = os.path.join(directory, "fields_final.vtk")
        vtkio.write_fields(path, state.space, state.pair)
        return [path]
    raise ValueError("format must be 'csv' or 'vtk'")


def _write_lines(path, lines):
    with open(path, "w") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")


def _setup_from_config(cfg):
    if cfg.experiment == "channel":
        setup = ad.experiment_channel()
        defaults = parse_config("")
        if (cfg.sigma, cfg.nu, cfg.kappa) != (defaults.sigma, defaults.nu,
                                              defaults.kappa):
            # the closed-form profile only matches the stock physics
            setup.exact_gradient = None
            setup.exact_velocity = None
    elif cfg.experiment == "convective":
        setup = ad.experiment_convective(cfg.method)
    else:
        # custom: unit-square stick boundary, unit body force in x, with
        # the configured physics
        def f(x, y):
            return np.stack([np.ones_like(x), np.zeros_like(x)])
        setup = ad.ExperimentSetup(
            name="custom",
            mesh=build_structured_unit_square(4),
            law=RegularisedLaw(cfg.sigma, cfg.nu, norm_factor=cfg.kappa),
            f=f,
            dirichlet_data=None,
            solver=SolverConfig(method=cfg.method),
        )
    setup.law = RegularisedLaw(cfg.sigma, cfg.nu, norm_factor=cfg.kappa)
    setup.solver = SolverConfig(
        method=cfg.method,
        delta_rule=cfg.delta_rule,
        max_inner_iterations=cfg.max_inner,
        criterion_exponent=cfg.criterion_exponent,
    )
    return setup


def _resolve_directory(directory):
    root = os.environ.get(OUT_ROOT_ENV)
    if root and not os.path.isabs(directory):
        return os.path.join(root, directory)
    return directory


class _Lock:
    def __init__(self, directory):
        self.path = os.path.join(directory, ".lock")
        self.fd = None

    def __enter__(self):
        try:
            self.fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise RuntimeError(
                "output directory is locked by another run "
                "(remove {} if that run is gone)".format(self.path))
        os.write(self.fd, str(os.getpid()).encode())
        return self

    def __exit__(self, *exc):
        os.close(self.fd)
        os.remove(self.path)
        return False


def cmd_run(args):
    try:
        with open(args.config) as fh:
            cfg = parse_config(fh.read())
    except OSError as exc:
        print("cannot read config: {}".format(exc), file=sys.stderr)
        return 2
    except ConfigError as exc:
        print("bad config: {}".format(exc), file=sys.stderr)
        return 2

    directory = _resolve_directory(cfg.directory)
    os.makedirs(directory, exist_ok=True)
    setup = _setup_from_config(cfg)
    adapt_cfg = ad.AdaptiveConfig(
        theta=cfg.theta,
        C_graph=cfg.C_graph,
        solver=setup.solver,
        max_elements=cfg.max_elements,
        max_outer=cfg.max_outer,
        zeta_variant=cfg.zeta_variant,
    )

    try:
        with _Lock(directory):
            state = ad.ailfem_run(
                setup.mesh, setup.law, setup.f, adapt_cfg,
                dirichlet_data=setup.dirichlet_data,
                exact_gradient=setup.exact_gradient,
                keep_snapshots=cfg.vtk_stride > 0)
            _write_outputs(state, setup, cfg, directory)
    except RuntimeError as exc:
        print("run failed: {}".format(exc), file=sys.stderr)
        return 1
    print(directory)
    return 0


def _write_outputs(state, setup, cfg, directory):
    export_state(state, "csv", directory)
    export_state(state, "vtk", directory)

    rows = ["noe,error,estimator"]
    for noe, err, est in ad.error_report(state):
        rows.append("{},{},{}".format(noe, _cell(err), _cell(est)))
    _write_lines(os.path.join(directory, "convergence.csv"), rows)

    rows = ["step,inner,energy,res_pde,res_ic"]
    for step, trace in enumerate(state.inner_traces):
        for inner, en, rp, ri in trace:
            rows.append("{},{},{},{},{}".format(
                step, inner, _cell(en), _cell(rp), _cell(ri)))
    _write_lines(os.path.join(directory, "iteration_trace.csv"), rows)

    if cfg.vtk_stride > 0:
        from .spaces import build_taylor_hood
        for step, (mesh, pair) in enumerate(state.snapshots):
            if step % cfg.vtk_stride:
                continue
            space = build_taylor_hood(mesh, setup.dirichlet_data)
            vtkio.write_fields(
                os.path.join(directory, "fields_{:04d}.vtk".format(step)),
                space, pair)


def cmd_describe_defaults(_args):
    sys.stdout.write(describe_defaults())
    return 0


def cmd_export(args):
    directory = _resolve_directory(args.directory)
    name = "run_log.csv" if args.format == "csv" else "fields_final.vtk"
    path = os.path.join(directory, name)
    try:
        with open(path) as fh:
            shutil.copyfileobj(fh, sys.stdout)
    except OSError as exc:
        print("cannot export: {}".format(exc), file=sys.stderr)
        return 2
    return 0


def cmd_report(args):
    directory = _resolve_directory(args.directory)
    try:
        for path in report_mod.render_all(directory):
            print(path)
    except (OSError, ValueError, KeyError) as exc:
        print("cannot render: {}".format(exc), file=sys.stderr)
        return 2
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="binghamflow",
        description="Adaptive solver runs for regularised Bingham flow")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute a configured experiment")
    p.add_argument("config", help="path to a dotted-key config file")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("describe-defaults",
                       help="print the default configuration")
    p.set_defaults(func=cmd_describe_defaults)

    p = sub.add_parser("export", help="re-emit a finished run to stdout")
    p.add_argument("directory", help="run output directory")
    p.add_argument("--format", choices=("csv", "vtk"), default="csv")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("report", help="render figures from run outputs")
    p.add_argument("directory", help="run output directory")
    p.set_defaults(func=cmd_report)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
