"""Command-line front end: run a scenario, sweep seeds, validate configs.

Exit codes: 0 success, 2 configuration error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import os
import sys

from .errors import ConfigError, RfswarmError
from .scenario import load_config
from .sim import export_results, run_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rfswarm",
        description="Decentralized RFS swarm control scenarios")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario and export results")
    run.add_argument("--config", required=True, help="scenario JSON file")
    run.add_argument("--out", default="rfswarm_out", help="output directory")
    run.add_argument("--seed", type=int, default=None,
                     help="override the config's rng_seed")
    run.add_argument("--gamma", default=None,
                     help="comma-separated gamma list overriding the config")
    run.add_argument("--loop-mode", choices=["true_state", "phd_estimate"],
                     default=None, help="override the config's loop_mode")

    sweep = sub.add_parser("sweep", help="Monte Carlo over consecutive seeds")
    sweep.add_argument("--config", required=True, help="scenario JSON file")
    sweep.add_argument("--seeds", type=int, required=True,
                       help="number of seeds, starting at the config seed")
    sweep.add_argument("--out", default="rfswarm_out", help="output directory")

    val = sub.add_parser("validate", help="schema-check a config file")
    val.add_argument("--config", required=True, help="scenario JSON file")
    return parser


def _apply_overrides(cfg, args):
    if getattr(args, "seed", None) is not None:
        cfg.rng_seed = args.seed
    if getattr(args, "loop_mode", None):
        cfg.loop_mode = args.loop_mode
    if getattr(args, "gamma", None):
        try:
            cfg.gamma_list = [float(g) for g in args.gamma.split(",") if g]
        except ValueError as exc:
            raise ConfigError(f"bad --gamma list: {exc}") from None
    cfg.validate()
    return cfg


def _cmd_run(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    res = run_scenario(cfg)
    export_results(res, args.out)
    print(f"wrote {os.path.join(args.out, 'summary.json')}")
    for rec in res.records:
        print(f"gamma={rec.gamma:g} nnz={rec.nnz} "
              f"nnz_ratio={rec.nnz_ratio:.4f} J_ratio={rec.J_ratio:.3e}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if args.seeds < 1:
        raise ConfigError(f"--seeds must be >= 1, got {args.seeds}")
    base = cfg.rng_seed
    for offset in range(args.seeds):
        cfg.rng_seed = base + offset
        res = run_scenario(cfg)
        out = os.path.join(args.out, f"seed_{cfg.rng_seed}")
        export_results(res, out)
        print(f"seed {cfg.rng_seed}: wrote {out}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    load_config(args.config)
    print(f"{args.config}: OK")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {"run": _cmd_run, "sweep": _cmd_sweep, "validate": _cmd_validate}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RfswarmError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
