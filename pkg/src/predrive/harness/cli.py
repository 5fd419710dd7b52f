"""Command-line entry point.

    predrive train    [config.yaml] [--set section.key=value ...]
    predrive evaluate [config.yaml] [--set ...] [--allow-fresh]
    predrive predict-bench [config.yaml] [--set ...]
    predrive replay   [config.yaml] [--set ...] [--episode N]

Omitting the config file runs with package defaults. Invalid configurations
exit with status 2 and a message naming the offending field.
"""
from __future__ import annotations

import argparse
import sys

from predrive.errors import ConfigurationError, PredriveError

from . import runner
from .config import load_config


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="predrive",
        description="Prediction-aware cooperative-driving RL harness.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("config", nargs="?", default=None,
                       help="YAML run configuration (defaults when omitted)")
        p.add_argument("--set", action="append", default=[],
                       dest="overrides", metavar="SECTION.KEY=VALUE",
                       help="override one config value (repeatable)")

    common(sub.add_parser("train", help="train predictor + fleet per seed"))
    p_eval = sub.add_parser("evaluate", help="greedy evaluation per seed")
    common(p_eval)
    p_eval.add_argument("--allow-fresh", action="store_true",
                        help="evaluate a freshly initialized agent when no "
                             "checkpoint exists")
    common(sub.add_parser("predict-bench",
                          help="synthetic forecasting benchmark"))
    p_rep = sub.add_parser("replay",
                           help="dump one episode's observations and verdicts")
    common(p_rep)
    p_rep.add_argument("--episode", type=int, default=0,
                       help="evaluation episode index to replay")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        if args.command == "train":
            results = runner.cmd_train(cfg)
            for seed, res in results.items():
                last = res.stats[-1]
                print(f"seed {seed}: {len(res.stats)} episodes, "
                      f"{res.updates} updates, "
                      f"final loss {last.loss_mean:.4f}, "
                      f"final eps {last.epsilon:.3f}")
            print(f"artifacts in {cfg.run.out_dir}")
        elif args.command == "evaluate":
            records, summary = runner.cmd_evaluate(
                cfg, allow_fresh=args.allow_fresh)
            for row in summary:
                print(f"{row.run_id}: crash% {row.crash_pct_mean:.2f} "
                      f"[{row.crash_pct_lo:.2f}, {row.crash_pct_hi:.2f}] "
                      f"over {row.episodes} episodes, "
                      f"speed {row.speed_mean:.2f} m/s")
            print(f"artifacts in {cfg.run.out_dir}")
        elif args.command == "predict-bench":
            rows = runner.cmd_predict_bench(cfg)
            methods: dict[str, list[float]] = {}
            for method, _, _, pe in rows:
                methods.setdefault(method, []).append(pe)
            for method in sorted(methods, key=lambda k: sum(methods[k])):
                mean = sum(methods[method]) / len(methods[method])
                print(f"{method:18s} mean PE {mean:.3f} m")
            print(f"artifacts in {cfg.run.out_dir}")
        else:
            steps = runner.cmd_replay(cfg, episode=args.episode)
            print(f"replayed {steps} steps; artifacts in {cfg.run.out_dir}")
    except PredriveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
