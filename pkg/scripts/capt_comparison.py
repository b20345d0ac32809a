"""Compare the centralized assignment planner against a trained policy.

Both run from identical spawns over a sweep of goal formations; the gap
column is how much longer the decentralized policy takes to cover all
goals than the centralized plan.

Usage:
    python scripts/capt_comparison.py --checkpoint runs/small/checkpoint.yaml
                                      [--formations circle=1.0,circle=1.3]
                                      [--episodes 10] [--seed 0]
"""

import argparse
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "src"))

from gpgswarm.capt import compare
from gpgswarm.checkpoint import load_checkpoint
from gpgswarm.world import Formation


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--checkpoint", default="runs/small/checkpoint.yaml")
    ap.add_argument("--formations", default="circle=0.8,circle=1.0,circle=1.2")
    ap.add_argument("--episodes", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default=None, help="optional CSV path")
    args = ap.parse_args()

    ck = load_checkpoint(args.checkpoint)
    labeled = [(f"F{i + 1}", Formation.parse(s.strip()))
               for i, s in enumerate(args.formations.split(","))]
    report = compare(ck.params, ck.world, labeled, args.episodes, args.seed,
                     graph=ck.graph)
    print("formation  plan_time  policy_time  gap  coverage")
    for row in report.rows:
        print(f"{row.formation:9s}  {row.capt_time_s:9.2f}"
              f"  {row.gpg_time_s:11.2f}  {row.gap_s:5.2f}"
              f"  {row.gpg_coverage:.2f}")
    if args.out:
        report.to_csv(args.out)
        print(f"rows written to {args.out}")


if __name__ == "__main__":
    main()
