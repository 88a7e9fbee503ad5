"""Command-line interface.

Subcommands: run an experiment config, fit empirical rates from a metric
CSV, validate a game-tree file, and summarize a finished run directory.
Exit code 0 only when every in-run assertion passes.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

from .config import ExperimentConfig


def cmd_run(args):
    cfg = ExperimentConfig.from_file(args.config)
    if args.out:
        cfg.out_dir = args.out
    from .scenarios import run_experiment
    results, aggregate = run_experiment(cfg)
    print(f"scenario={cfg.scenario} seeds={len(results)} -> {cfg.out_dir}")
    for key in sorted(aggregate):
        a = aggregate[key]
        print(f"  {key}: mean={a['mean']:.6g} max={a['max']:.6g}")
    failures = [k for k in aggregate
                if k.endswith("_ok]") or k.endswith("_ok")
                if aggregate[k]["min"] < 1.0]
    if failures:
        print(f"FAILED in-run assertions: {failures}", file=sys.stderr)
        return 1
    return 0


def cmd_ratefit(args):
    from .ratefit import ratefit
    with open(args.csv, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        print("empty CSV", file=sys.stderr)
        return 1
    xs = [float(r[args.x]) for r in rows]
    ys = [float(r[args.y]) for r in rows]
    fit = ratefit(xs, ys)
    print(json.dumps(fit.to_json(), indent=2, sort_keys=True))
    return 0


def cmd_validate_game(args):
    from ..efg import GameTree, validate_recall
    with open(args.game) as fh:
        text = fh.read()
    try:
        game = GameTree.from_text(text)
    except ValueError as err:
        print(f"INVALID: {err}", file=sys.stderr)
        return 1
    print(f"valid game: {len(game.nodes)} nodes, {len(game.leaves)} leaves, "
          f"{len(game.infosets)} information sets, "
          f"{game.n_players} players")
    for player in range(game.n_players):
        rep = validate_recall(game, player)
        print(f"  player {player + 1}: perfect_recall={rep.perfect_recall} "
              f"path_recall={rep.path_recall}")
        if rep.witnesses:
            print(f"    witnesses: {rep.witnesses}")
    return 0


def cmd_report(args):
    with open(f"{args.run_dir}/aggregate.json") as fh:
        aggregate = json.load(fh)
    with open(f"{args.run_dir}/manifest.json") as fh:
        manifest = json.load(fh)
    print(f"scenario: {manifest['config']['scenario']}  "
          f"hash: {manifest['config_hash']}  "
          f"version: {manifest['code_version']}")
    width = max(len(k) for k in aggregate)
    print(f"{'metric'.ljust(width)}  {'mean':>12}  {'max':>12}  {'min':>12}")
    for k in sorted(aggregate):
        a = aggregate[k]
        print(f"{k.ljust(width)}  {a['mean']:>12.6g}  {a['max']:>12.6g}  "
              f"{a['min']:>12.6g}")
    return 0


def main(argv=None):
    logging.basicConfig(level=logging.WARNING)
    parser = argparse.ArgumentParser(
        prog="eventcast",
        description="event-conditionally unbiased prediction experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None, help="override output dir")
    p_run.set_defaults(fn=cmd_run)

    p_fit = sub.add_parser("ratefit", help="log-log slope of a metric series")
    p_fit.add_argument("csv")
    p_fit.add_argument("--x", default="t")
    p_fit.add_argument("--y", required=True)
    p_fit.set_defaults(fn=cmd_ratefit)

    p_game = sub.add_parser("validate-game", help="validate a game-tree file")
    p_game.add_argument("game")
    p_game.set_defaults(fn=cmd_validate_game)

    p_rep = sub.add_parser("report", help="summarize a run directory")
    p_rep.add_argument("run_dir")
    p_rep.set_defaults(fn=cmd_report)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
