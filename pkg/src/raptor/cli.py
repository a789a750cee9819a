"""Command-line runner: ``raptor run <preset|config-path> [overrides]``."""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from .errors import ConfigError
from .harness import (ALGORITHMS, PRESET_NAMES, load_config_file, preset,
                      run_experiment)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="raptor",
        description="Adaptive random-walk Metropolis benchmarks "
                    "(AM / RAPT / RAPT2 / RAPTOR).",
    )
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario preset or key=value config file")
    run.add_argument("config",
                     help=f"preset name ({', '.join(PRESET_NAMES)}) or config path")
    run.add_argument("--algorithm", "-a", choices=ALGORITHMS)
    run.add_argument("--seed", "-s", type=int)
    run.add_argument("--replications", "-B", type=int)
    run.add_argument("--iters", "-n", type=int, dest="iterations")
    run.add_argument("--burnin", "-b", type=int, dest="burn_in")
    run.add_argument("--alpha", type=float)
    run.add_argument("--chains", "-M", type=int)
    run.add_argument("--out", dest="out_dir")
    run.add_argument("--full-scale", action="store_true",
                     help="paper-scale replication counts / chain lengths")
    run.add_argument("--workers", "-j", type=int)
    run.add_argument("--trace", type=int, action="append", metavar="COORD",
                     help="write a per-chain trace of this 1-based coordinate")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config in PRESET_NAMES:
            cfg = preset(args.config, full_scale=args.full_scale)
        elif os.path.exists(args.config):
            cfg = load_config_file(args.config)
        else:
            raise ConfigError(
                f"{args.config!r} is neither a preset ({', '.join(PRESET_NAMES)}) "
                "nor an existing config file"
            )
        overrides = {
            k: getattr(args, k)
            for k in ("algorithm", "seed", "replications", "iterations",
                      "burn_in", "alpha", "chains", "out_dir", "workers")
            if getattr(args, k) is not None
        }
        if args.trace:
            overrides["trace_coords"] = tuple(args.trace)
        cfg = dataclasses.replace(cfg, **overrides)
        if "out_dir" not in overrides:
            cfg = dataclasses.replace(
                cfg, out_dir=os.path.join("runs", f"{cfg.label or cfg.scenario}-{cfg.algorithm}"))
        _, _, agg = run_experiment(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    line = (f"{agg['scenario']} {agg['algorithm']}: "
            f"AR={agg['ar_mean']:.4f} mse_sum={agg['mse_sum']:.4g} "
            f"dn={agg['dn_mean']:.4g} over {agg['replications']} replicate(s)")
    print(line)
    print(f"outputs: {cfg.out_dir}")
    return 0


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
