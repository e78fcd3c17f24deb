"""Command line entry point: run, audit, solve and batch."""
from __future__ import annotations

import argparse
import glob
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from csg.environment import BudgetError
from csg.forecaster import NRBRError
from csg.harness import (
    ConfigError,
    ExperimentConfig,
    audit_transcript,
    load_game_any,
    run_experiment,
    solve_game,
)
from csg.transcript import Transcript

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET = 0, 2, 3


def _setup_logging() -> None:
    level = os.environ.get("CSG_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def _emit(d: dict) -> None:
    print(json.dumps(d, indent=2, sort_keys=True))


def cmd_run(args: argparse.Namespace) -> int:
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    out_dir = args.out or cfg.out
    if out_dir is None:
        raise ConfigError("no output directory (--out or config 'out')")
    out = run_experiment(cfg, out_dir)
    _emit(out.summary.to_json())
    return EXIT_OK


def cmd_audit(args: argparse.Namespace) -> int:
    try:
        tr = Transcript.load(args.transcript)
    except (OSError, ValueError, IndexError) as e:
        raise ConfigError(f"cannot read transcript: {e}") from e
    game = load_game_any(args.game)
    _emit(audit_transcript(tr, game, args.binning, args.scheme, args.tent_eps))
    return EXIT_OK


def cmd_solve(args: argparse.Namespace) -> int:
    _emit(solve_game(load_game_any(args.game)))
    return EXIT_OK


def parse_seeds(spec: str) -> list[int]:
    if ".." in spec:
        a, b = spec.split("..")
        return list(range(int(a), int(b) + 1))
    return [int(s) for s in spec.split(",")]


def _batch_cell(cell: tuple[str, int, str]) -> tuple[str, int, int]:
    path, seed, out = cell
    try:
        cfg = ExperimentConfig.load(path)
        cfg.seed = seed
        run_experiment(cfg, Path(out) / Path(path).stem / f"seed-{seed}")
        return path, seed, EXIT_OK
    except BudgetError:
        return path, seed, EXIT_BUDGET
    except (ConfigError, NRBRError):
        return path, seed, EXIT_CONFIG


def cmd_batch(args: argparse.Namespace) -> int:
    paths = sorted(glob.glob(args.configs))
    if not paths:
        raise ConfigError(f"no configs match {args.configs}")
    for p in paths:
        ExperimentConfig.load(p)
    cells = [(p, s, args.out) for p in paths for s in parse_seeds(args.seeds)]
    with ProcessPoolExecutor(max_workers=args.workers) as ex:
        results = list(ex.map(_batch_cell, cells))
    for p, s, code in results:
        print(f"{p}\tseed={s}\texit={code}")
    return max(code for _, _, code in results)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="csg", description="Calibrated Stackelberg game simulations")
    sub = ap.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="run one experiment")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--out", default=None)
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("audit", help="audit a transcript")
    a.add_argument("--transcript", required=True)
    a.add_argument("--game", required=True, help="game JSON file or toy id (G1, G2)")
    a.add_argument("--binning", choices=["deterministic", "randomized", "tent"], default="deterministic")
    a.add_argument("--scheme", choices=["all", "dyadic", "full"], default="all")
    a.add_argument("--tent-eps", type=float, default=0.05)
    a.set_defaults(func=cmd_audit)

    s = sub.add_parser("solve", help="Stackelberg value of a game")
    s.add_argument("--game", required=True)
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("batch", help="run configs x seeds in parallel")
    b.add_argument("--configs", required=True, help="glob of config files")
    b.add_argument("--seeds", required=True, help="A..B or comma list")
    b.add_argument("--out", required=True)
    b.add_argument("--workers", type=int, default=None)
    b.set_defaults(func=cmd_batch)
    return ap


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, NRBRError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetError as e:
        print(f"budget error: {e}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())
