"""Command line: ``freeway-dqn {train,eval,compare}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..errors import FreewayDQNError
from .config import RunConfig, load_config
from .runner import compare, evaluate, train

log = logging.getLogger("freeway_dqn")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="freeway-dqn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="INI run config; defaults apply when omitted")
        p.add_argument("--seed", type=int, help="master seed (u64)")
        p.add_argument("--variant", choices=["dql", "ddql", "dueling", "per"])
        p.add_argument("--episodes", type=int, help="training episodes")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("train", help="train one variant")
    common(p)
    p = sub.add_parser("eval", help="greedy evaluation of saved parameters")
    common(p)
    p.add_argument("--params", type=Path, required=True, help="parameter file written by train")
    p = sub.add_parser("compare", help="train and evaluate all four variants")
    common(p)
    p.add_argument("--jobs", type=int, default=1, help="variant pipelines to run in parallel")
    p.add_argument("--baseline-episodes", type=int, default=100)
    return parser


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    return cfg.with_overrides(seed=args.seed, variant=args.variant, episodes=args.episodes, output=args.out)


def _progress(record):
    log.info("episode %d steps %d norm_reward %.3f collision %d epsilon %.3f", record.episode, record.steps,
             record.norm_reward, record.collision, record.epsilon)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = _config(args)
        if args.command == "train":
            outputs = train(cfg, progress=_progress)
            print(f"metrics={outputs.metrics} params={outputs.params}")
        elif args.command == "eval":
            outputs = evaluate(args.params, cfg)
            print(f"metrics={outputs.metrics} actions={outputs.actions}")
        else:
            report = compare(cfg, jobs=args.jobs, baseline_episodes=args.baseline_episodes)
            print(f"summary={report.summary_path}")
    except FreewayDQNError as exc:
        msg = str(exc).replace("\n", " ").replace('"', "'")
        print(f'error kind={exc.kind} message="{msg}"', file=sys.stderr)
        return 2 if exc.kind == "config" else 1
    except OSError as exc:
        print(f'error kind=io message="{exc}"', file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
