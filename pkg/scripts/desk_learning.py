"""Desk-scale learning check: train one or all variants and compare against a random policy.

    python scripts/desk_learning.py --episodes 300 --lr 0.01 --out runs/desk
"""

import argparse
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from freeway_dqn.harness.config import RunConfig, load_config
from freeway_dqn.harness.runner import VARIANTS, random_baseline, read_metrics, train


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", type=Path)
    ap.add_argument("--episodes", type=int, default=300)
    ap.add_argument("--variant", choices=[v.value for v in VARIANTS])
    ap.add_argument("--lr", type=float)
    ap.add_argument("--gamma", type=float)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--window", type=int, default=30)
    ap.add_argument("--out", type=Path, default=Path("runs/desk"))
    args = ap.parse_args()

    cfg = load_config(args.config) if args.config else RunConfig()
    cfg = replace(cfg, episodes=args.episodes, seed=args.seed)
    for name in ("lr", "gamma"):
        if getattr(args, name) is not None:
            cfg = replace(cfg, agent=replace(cfg.agent, **{name: getattr(args, name)}))

    base = read_metrics(random_baseline(cfg, 100, args.out).metrics)
    base_mean = np.mean([r["norm_reward"] for r in base])
    print(f"random baseline: mean norm reward {base_mean:.4f}")

    variants = [args.variant] if args.variant else [v.value for v in VARIANTS]
    for v in variants:
        t0 = time.time()
        vcfg = replace(cfg, agent=replace(cfg.agent, variant=v))
        rows = read_metrics(train(vcfg, args.out / v).metrics)
        norm = np.array([r["norm_reward"] for r in rows])
        lead, trail = norm[:args.window].mean(), norm[-args.window:].mean()
        coll = np.mean([r["collision"] for r in rows[-args.window:]])
        ok = trail >= 1.2 * lead and trail > base_mean
        print(f"{v:8s} leading {lead:.4f} trailing {trail:.4f} ratio {trail / lead:.2f} "
              f"trailing collisions {coll:.2f} {'PASS' if ok else 'FAIL'} ({time.time() - t0:.0f}s)")


if __name__ == "__main__":
    main()
