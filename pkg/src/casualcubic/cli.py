"""``casualcubic`` command line: run, sweep, validate, plot, info."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .data import ConfigError, RunConfig, TraceSchemaError, load_config, read_trace_csv, write_trace_csv
from .oracle import OptimizationError
from .plot import X_AXES, Y_AXES, PlotError, PlotSpec, write_plot
from .runner import build_problem, execute, expand_sweep, final_window_gap

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for validation failures here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_budget_flags(p):
    p.add_argument("--config", required=True, help="flat YAML/JSON run configuration")
    p.add_argument("--out", help="output path (overrides the config's out key)")
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--max-seconds", type=float)
    p.add_argument("--grad-tol", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="casualcubic", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run one configured experiment and write its trace CSV")
    _add_budget_flags(p)

    p = sub.add_parser("sweep", help="grid over L_hat x H_hat x seed lists")
    _add_budget_flags(p)
    p.add_argument("--jobs", type=int, default=1, help="parallel cells")

    p = sub.add_parser("validate", help="run every numeric validator")
    p.add_argument("--out", help="write the report CSV here instead of stdout")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("plot", help="render traces to SVG")
    p.add_argument("traces", nargs="+")
    p.add_argument("--x-axis", choices=X_AXES, default="iteration")
    p.add_argument("--y-axis", choices=Y_AXES, default="gap")
    p.add_argument("--log-x", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--log-y", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--f-star", type=float)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("info", help="print problem statistics")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    return parser


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    over = {}
    for flag, key in (("seed", "seed"), ("max_iters", "max_iters"), ("max_seconds", "max_seconds"),
                      ("grad_tol", "grad_tol"), ("out", "out")):
        val = getattr(args, flag, None)
        if val is not None:
            over[key] = val
    if over:
        cfg = replace(cfg, **over)
        cfg.validate()
    return cfg


def _check_writable(path: str, force: bool):
    if os.path.exists(path) and not force:
        raise UsageError(f"{path} exists; pass --force to overwrite")


def cmd_run(args) -> int:
    cfg = _load(args)
    if not cfg.out:
        raise UsageError("no output path: set 'out' in the config or pass --out")
    _check_writable(cfg.out, args.force)
    trace = execute(cfg)
    os.makedirs(os.path.dirname(os.path.abspath(cfg.out)), exist_ok=True)
    write_trace_csv(trace, cfg.out)
    meta = trace.metadata
    print(f"{meta['method']} on {meta['problem']}: {len(trace) - 1} iterations, "
          f"status={meta['status']}, f={trace.records[-1].f:.10g} -> {cfg.out}")
    return EXIT_OK


def _cell_name(cfg: RunConfig) -> str:
    return f"{cfg.method}_L{cfg.L_hat:g}_H{cfg.H_hat:g}_s{cfg.seed}.csv"


def _run_cell(cfg: RunConfig):
    trace = execute(cfg)
    write_trace_csv(trace, cfg.out)
    return cfg.L_hat, cfg.H_hat, cfg.seed, final_window_gap(trace)


def cmd_sweep(args) -> int:
    cfg = _load(args)
    if cfg.L_hat is None or cfg.H_hat is None:
        raise UsageError("sweeps need L_hat and H_hat (values or lists)")
    out_dir = cfg.out or "sweep"
    summary = os.path.join(out_dir, "summary.csv")
    _check_writable(summary, args.force)
    os.makedirs(out_dir, exist_ok=True)
    cells = [replace(c, out=os.path.join(out_dir, _cell_name(c))) for c in expand_sweep(cfg)]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_cell, cells))
    else:
        results = [_run_cell(c) for c in cells]
    groups: dict = {}
    for L, H, _seed, gap in results:
        groups.setdefault((L, H), []).append(gap)
    with open(summary, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["L_hat", "H_hat", "n_seeds", "median_floor"])
        for (L, H), gaps in groups.items():
            w.writerow([f"{L:.17g}", f"{H:.17g}", len(gaps), f"{float(np.median(gaps)):.17g}"])
    print(f"{len(cells)} runs in {len(groups)} cells -> {summary}")
    return EXIT_OK


def cmd_validate(args) -> int:
    from .validation import reports_to_csv, run_all_checks

    reports = run_all_checks(seed=args.seed)
    text = reports_to_csv(reports)
    if args.out:
        _check_writable(args.out, args.force)
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    failed = [r.name for r in reports if not r.passed]
    if failed:
        print(f"{len(failed)} check(s) failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def cmd_plot(args) -> int:
    _check_writable(args.out, args.force)
    traces = [read_trace_csv(p) for p in args.traces]
    spec = PlotSpec(traces=list(args.traces), x_axis=args.x_axis, y_axis=args.y_axis,
                    log_x=args.log_x, log_y=args.log_y, f_star=args.f_star, output=args.out)
    write_plot(traces, spec)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_info(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    bp = build_problem(cfg, with_fstar=False)
    o = bp.base
    info = {"problem": o.name, "d": o.dim(), "n": o.n_samples}
    A = getattr(o, "A", None)
    if A is not None:
        info["nnz"] = int(A.nnz) if hasattr(A, "nnz") else int(np.count_nonzero(A))
    if bp.H_estimate is not None:
        info["H_estimate"] = bp.H_estimate
    if o.has_hessian:
        eig = np.linalg.eigvalsh(o.hessian(bp.x0))
        info["L_at_x0"] = float(eig[-1])
    if hasattr(o, "reg") and A is not None:
        from .data import spectral_norm
        # logistic curvature never exceeds |A|^2 / (4n) + l2
        info["L_bound"] = spectral_norm(A) ** 2 / (4.0 * A.shape[0]) + o.reg
    print(json.dumps(info, indent=2, sort_keys=True))
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "validate": cmd_validate, "plot": cmd_plot,
            "info": cmd_info}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError, PlotError, TraceSchemaError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OptimizationError, ValueError, OSError, ArithmeticError) as exc:
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
