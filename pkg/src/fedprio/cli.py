"""Command-line entry point. Thin wrapper over the harness; no logic lives here.

    fedprio run --config exp.json [--out DIR] [--max-rounds N]
    fedprio sweep --config sweep.json [--out DIR] [--max-rounds N]
    fedprio lr-search --config exp.json --grid 0.01,0.05,0.1 [--target T]
    fedprio serve [--host H] [--port P] [--out DIR]

Exit codes: 0 ok, 1 validation error, 2 runtime failure. The default output
directory comes from --out, then $FEDPRIO_OUT, then ./fedprio_out.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from .config import parse_config, parse_sweep
from .errors import ConfigurationError
from .harness import grid_search_lr, run_single, run_sweep

OUT_ENV_VAR = "FEDPRIO_OUT"


def _setup_logging(verbose: bool) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    logger = logging.getLogger("fedprio")
    logger.handlers = [handler]
    logger.setLevel(logging.INFO if verbose else logging.WARNING)


def _resolve_out(args, cfg_out_dir: str | None) -> Path:
    if args.out:
        return Path(args.out)
    if cfg_out_dir:
        return Path(cfg_out_dir)
    return Path(os.environ.get(OUT_ENV_VAR, "fedprio_out"))


def _apply_overrides(cfg, args):
    if args.max_rounds is not None:
        return replace(cfg, trainer=replace(cfg.trainer, max_rounds=args.max_rounds))
    return cfg


def _cmd_run(args) -> int:
    cfg = _apply_overrides(parse_config(args.config), args)
    out = _resolve_out(args, cfg.out_dir)
    result = run_single(cfg, out)
    print(f"run complete: {len(result.records)} rounds, reports in {out}")
    return 0


def _cmd_sweep(args) -> int:
    sweep = parse_sweep(args.config)
    sweep = replace(sweep, base=_apply_overrides(sweep.base, args))
    out = _resolve_out(args, sweep.base.out_dir)
    outcome = run_sweep(sweep, out)
    print(f"sweep complete: {len(outcome.run_ids)} runs, reports in {out}")
    return 0


def _cmd_lr_search(args) -> int:
    cfg = _apply_overrides(parse_config(args.config), args)
    try:
        grid = [float(v) for v in args.grid.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"--grid: {exc}") from exc
    result = grid_search_lr(cfg, grid, target=args.target, fraction=args.fraction)
    for lr in sorted(result.rounds_by_lr):
        rounds = result.rounds_by_lr[lr]
        print(f"lr={lr:g} rounds={'NR' if rounds is None else rounds}")
    if result.chosen is None:
        print(f"NOT-FOUND: no grid value reached target {result.target} "
              f"for {result.fraction:.0%} of devices")
    else:
        print(f"chosen lr={result.chosen:g}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(out_root=_resolve_out(args, None))
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedprio",
        description="Deterministic federated-learning simulator with "
        "prioritized multi-criteria client weighting.",
    )
    parser.add_argument("-q", "--quiet", action="store_true", help="suppress per-round logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="path to the JSON config")
        p.add_argument("--out", help="output directory (default: $FEDPRIO_OUT or ./fedprio_out)")
        p.add_argument("--max-rounds", type=int, help="override the configured round limit")

    p_run = sub.add_parser("run", help="execute one experiment")
    common(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="execute a criteria-ordering sweep")
    common(p_sweep)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_lr = sub.add_parser("lr-search", help="grid-search the learning rate on the baseline")
    common(p_lr)
    p_lr.add_argument("--grid", required=True, help="comma-separated learning rates")
    p_lr.add_argument("--target", type=float, help="target accuracy (default: first configured)")
    p_lr.add_argument("--fraction", type=float, default=0.5, help="device fraction (default 0.5)")
    p_lr.set_defaults(func=_cmd_lr_search)

    p_serve = sub.add_parser("serve", help="start the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.add_argument("--out", help="root directory for job outputs")
    p_serve.set_defaults(func=_cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(verbose=not args.quiet)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - map everything else to exit 2
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
