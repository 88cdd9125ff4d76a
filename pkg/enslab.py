"""
ENS laboratory command line
Usage: python enslab.py <run|diagnose|decay-fit|twin|inequalities|density-longtime|emit-plots> [options]
"""
import argparse
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
from loguru import logger

import config
from utils.checkpoint import read_checkpoint
from utils.errors import EnsLabError, InvalidParameterError
from utils.experiments import (
    Perturbation,
    box_window_end,
    decay_fit,
    density_longtime,
    ens_decay,
    heat_decay_series,
    monitor,
    twin_run,
)
from utils.functionals import besov_equivalence_sweep, functionals_row, smallness_diagnostics, sweep
from utils.ledger import read_ledger
from utils.report import PLOT_GROUPS, plot_script, render_summary
from utils.run_config import RunConfig, emit_config, parse_config
from utils.runner import output_dir, run
from utils.spectral_core import make_grid


def setup_logging():
    logger.remove()
    # resolve sys.stderr per message so redirected streams are honoured
    logger.add(lambda message: sys.stderr.write(message), level=config.LOG_LEVEL)
    logger.add(config.LOG_FILE, rotation="1 day", retention="30 days", level="INFO")


def load_config(path: str) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


# ========== SUBCOMMANDS ==========

def cmd_run(args) -> int:
    cfg = load_config(args.config)
    trajectory, ledger = run(cfg)
    out = output_dir(cfg)
    (out / "run.cfg").write_text(emit_config(cfg), encoding="utf-8")

    report = monitor(ledger)
    items = {
        "final time": trajectory.final.time,
        "ledger rows": len(ledger),
        "ledger": str(out / config.LEDGER_FILE.name),
        "checkpoints": len(trajectory.checkpoints),
        **report.summary,
    }
    print(render_summary(f"RUN {cfg.n}^3  dt={cfg.dt}  t_end={cfg.t_end}", items))
    return 0


def cmd_diagnose(args) -> int:
    checkpoint = read_checkpoint(Path(args.checkpoint))
    state = checkpoint.state
    row = functionals_row(state, rho0_inf=args.rho0_inf)
    items = {"time": state.time, "n": state.grid.n, "scheme": checkpoint.variant, **row}
    if state.time == 0.0 or args.smallness:
        items.update({f"initial {k}": v for k, v in smallness_diagnostics(state).items()})
    print(render_summary(f"DIAGNOSE {args.checkpoint}", items))
    return 0


def cmd_decay_fit(args) -> int:
    extra = {}
    if args.heat:
        spec = config.HEAT_DECAY
        grid = make_grid(spec["n"], spec["box_len"])
        times = np.linspace(spec["t_lo"], spec["t_hi"], spec["samples"])
        values = heat_decay_series(grid, spec["sigma"], times, project=args.project)
        fit = decay_fit(times, values)
        title = f"HEAT DECAY  n={spec['n']}  sigma={spec['sigma']}"
    else:
        if not args.ledger:
            raise InvalidParameterError("decay-fit needs a ledger path or --heat")
        ledger = read_ledger(Path(args.ledger))
        frame = ledger.to_frame()
        column = args.column or (config.ENS_DECAY["column"] if args.ens_check else "E0")
        if column not in frame.columns:
            raise InvalidParameterError(f"unknown ledger column {column!r}")
        t_hi = args.t_hi if args.t_hi is not None else float(frame["t"].max())
        if args.box_len is not None:
            t_hi = min(t_hi, box_window_end(args.box_len))
        if args.t_lo is not None:
            t_lo = args.t_lo
        else:
            t_lo = config.ENS_DECAY["t_from"] if args.ens_check else float(frame["t"].min())
        if args.ens_check:
            report = ens_decay(ledger, column=column, t_from=t_lo, window=(t_lo, t_hi))
            fit = report.fit
            extra = {"monotone": report.monotone, "max_increase": report.max_increase, "holds": report.holds}
        else:
            fit = decay_fit(frame["t"], frame[column], window=(t_lo, t_hi))
        title = f"DECAY FIT  {column}  ({args.ledger})"

    print(render_summary(title, {
        "a": fit.a, "beta": fit.beta, "t_lo": fit.t_lo, "t_hi": fit.t_hi,
        "residual": fit.residual, "points": fit.points, **extra,
    }))
    return 0


def cmd_twin(args) -> int:
    cfg = load_config(args.config)
    perturbation = Perturbation(target=args.target, epsilon=args.epsilon, seed=args.seed, band=args.band)
    report = twin_run(cfg, perturbation)
    csv_path = Path(args.csv) if args.csv else output_dir(cfg) / "twin.csv"
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    report.series.to_csv(csv_path, index=False, float_format="%.17g")
    print(render_summary(
        f"TWIN RUN  {perturbation.target}  eps={perturbation.epsilon:g}",
        {"max dE": report.max_dE, "worst excess": report.worst_excess(),
         "holds (5%)": report.holds(), "series": str(csv_path)},
        report.series,
    ))
    return 0


def cmd_inequalities(args) -> int:
    frame = sweep(resolutions=args.resolutions, count=args.count, band=args.band, seed=args.seed, p=args.p)
    if args.csv:
        frame.to_csv(args.csv, index=False, float_format="%.17g")
    print(render_summary(f"INEQUALITY SWEEP  {args.count} fields", {}, frame))
    if args.besov:
        besov = besov_equivalence_sweep()
        summary = besov.groupby("sigma")["ratio"].agg(["min", "max"]).reset_index()
        print(render_summary("BESOV HEAT/DYADIC RATIO", {}, summary))
    return 0


def cmd_density_longtime(args) -> int:
    cfg = load_config(args.config)
    cfg = cfg.model_copy(update={"output": cfg.output.model_copy(update={"keep_trajectory": True})})
    trajectory, _ = run(cfg)
    report = density_longtime(trajectory)
    csv_path = Path(args.csv) if args.csv else output_dir(cfg) / "density_longtime.csv"
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    report.series.to_csv(csv_path, index=False, float_format="%.17g")
    print(render_summary("DENSITY LONG-TIME", {
        "settled": report.precondition_met,
        "monotone": report.monotone,
        "exponent": report.exponent,
        "series": str(csv_path),
    }, report.series))
    return 0


def cmd_emit_plots(args) -> int:
    ledger_path = Path(args.ledger)
    out = Path(args.out) if args.out else ledger_path.with_name(ledger_path.stem + "_plots.py")
    out.write_text(plot_script(ledger_path, args.groups), encoding="utf-8")
    print(f"Plot script written to {out}")
    return 0


# ========== PARSER ==========

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="enslab", description="Euler-Navier-Stokes spectral laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="Execute a run configuration")
    p.add_argument("--config", required=True, help="Flat key = value config file")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("diagnose", help="Recompute every functional from a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--rho0-inf", type=float, default=None, help="Initial density bound (default: current)")
    p.add_argument("--smallness", action="store_true", help="Also print data-size diagnostics")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("decay-fit", help="Fit (1 + a t)^-beta to a ledger column")
    p.add_argument("ledger", nargs="?")
    p.add_argument("--column", default=None, help="Ledger column (default E0, or E1 with --ens-check)")
    p.add_argument("--t-lo", type=float, default=None)
    p.add_argument("--t-hi", type=float, default=None)
    p.add_argument("--box-len", type=float, default=None, help="Cap the window at (L/4)^2")
    p.add_argument("--heat", action="store_true", help="Fit the Gaussian heat-decay proxy instead")
    p.add_argument("--project", action="store_true", help="Leray-project the heat proxy data")
    p.add_argument("--ens-check", action="store_true", help="Also require the column to be nonincreasing after --t-lo")
    p.set_defaults(func=cmd_decay_fit)

    p = sub.add_parser("twin", help="Twin-run stability experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--target", choices=("u", "w", "rho"), default=config.TWIN_RUN["target"])
    p.add_argument("--epsilon", type=float, default=config.TWIN_RUN["epsilon"])
    p.add_argument("--seed", type=int, default=config.TWIN_RUN["seed"])
    p.add_argument("--band", type=int, default=config.TWIN_RUN["band"])
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_twin)

    p = sub.add_parser("inequalities", help="Random-field inequality sweep")
    p.add_argument("--resolutions", type=int, nargs="+", default=list(config.INEQUALITY_SWEEP["resolutions"]))
    p.add_argument("--count", type=int, default=config.INEQUALITY_SWEEP["count"])
    p.add_argument("--band", type=int, default=config.INEQUALITY_SWEEP["band"])
    p.add_argument("--seed", type=int, default=config.INEQUALITY_SWEEP["seed"])
    p.add_argument("--p", type=float, default=config.INEQUALITY_SWEEP["embed0_p"])
    p.add_argument("--besov", action="store_true", help="Also run the heat/dyadic equivalence sweep")
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_inequalities)

    p = sub.add_parser("density-longtime", help="Run and analyse convergence of rho")
    p.add_argument("--config", required=True)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_density_longtime)

    p = sub.add_parser("emit-plots", help="Write a matplotlib script for a ledger")
    p.add_argument("ledger")
    p.add_argument("--out", default=None)
    p.add_argument("--groups", nargs="+", default=list(PLOT_GROUPS), choices=list(PLOT_GROUPS))
    p.set_defaults(func=cmd_emit_plots)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    setup_logging()
    try:
        return args.func(args)
    except EnsLabError as e:
        print(f"error: {e.kind}: {' '.join(str(e).split())}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: io: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
