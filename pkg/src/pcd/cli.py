"""Command-line entry point: ``pcd run|project|metrics|plot``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import metrics
from .plotting import CellData, emit_plot
from .projections import VelocityChain
from .runner import ConfigError, execute, load_config
from .schedules import ConfigurationError


def _read_traj(path) -> np.ndarray:
    try:
        a = np.loadtxt(path, delimiter=",", ndmin=2)
    except OSError as exc:
        raise SystemExit(f"error: cannot read {path}: {exc}") from None
    except ValueError as exc:
        raise SystemExit(f"error: {path} is not a numeric CSV: {exc}") from None
    return a


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    report = execute(cfg, seed=args.seed, workers=args.workers)
    for cell in report.cells:
        m = cell["mean"]
        parts = [f"{k}={m[k]:.4f}" for k in ("su", "rs", "cs", "overlap") if m.get(k) is not None]
        print(f"{cell['cell']}: " + " ".join(parts)
              + f" nonconverged={cell['nonconverged_projections']}/{cell['projections']}")
    print(f"wrote {report.csv_path} and {report.json_path}")
    return 0


def _cmd_project(args) -> int:
    x = _read_traj(args.input)
    if x.shape[1] != 2:
        raise SystemExit("error: trajectory CSV must have two columns")
    x0 = np.array(args.x0 if args.x0 is not None else [0.0, 0.0])
    op = VelocityChain(x0, args.vmax, args.dt, x.shape[0], args.penalty, args.max_iter, args.tol)
    out, info = op.solve(x)
    text = "\n".join(f"{float(a)!r},{float(b)!r}" for a, b in out) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    status = "converged" if bool(info.converged) else "did not converge"
    print(f"ADMM {status} after {int(info.iterations)} iterations", file=sys.stderr)
    return 0 if bool(info.converged) else 3


def _cmd_metrics(args) -> int:
    a, b = _read_traj(args.a), _read_traj(args.b)
    print(json.dumps({"dtw": metrics.dtw(a, b), "dfd": metrics.dfd(a, b)}))
    return 0


def _cmd_plot(args) -> int:
    cell = CellData.load(args.cell)
    out = Path(args.output) if args.output else Path(args.cell).with_suffix(".svg")
    emit_plot(cell, out, config=args.config_index)
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pcd", description="Projected coupled diffusion experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment configuration (YAML)")
    r.add_argument("config")
    r.add_argument("--seed", type=int, default=None, help="replace the configured seed list")
    r.add_argument("--workers", type=int, default=None, help="parallel workers (output is unchanged)")
    r.set_defaults(func=_cmd_run)

    j = sub.add_parser("project", help="project an H x 2 trajectory CSV onto the speed-limit set")
    j.add_argument("--input", required=True)
    j.add_argument("--vmax", type=float, required=True)
    j.add_argument("--dt", type=float, required=True)
    j.add_argument("--x0", type=float, nargs=2, default=None, metavar=("X", "Y"), help="start point, default origin")
    j.add_argument("--output", default=None)
    j.add_argument("--penalty", type=float, default=10.0)
    j.add_argument("--max-iter", type=int, default=700)
    j.add_argument("--tol", type=float, default=2e-5)
    j.set_defaults(func=_cmd_project)

    m = sub.add_parser("metrics", help="DTW and discrete Frechet distance between two trajectory CSVs")
    m.add_argument("--a", required=True)
    m.add_argument("--b", required=True)
    m.set_defaults(func=_cmd_metrics)

    q = sub.add_parser("plot", help="render a saved run cell (.npz) to SVG")
    q.add_argument("cell")
    q.add_argument("--output", default=None)
    q.add_argument("--config-index", type=int, default=0)
    q.set_defaults(func=_cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ConfigurationError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
