"""Run a small-swarm checkpoint on a larger swarm without retraining.

The filters trained on the small swarm are applied unchanged; only the
graph grows. Sensing counts and per-node degree k stay as trained.

Usage:
    python scripts/transfer_demo.py --checkpoint runs/small/checkpoint.yaml
                                    [--n-robots 10] [--formation circle=1.5]
                                    [--episodes 20] [--seed 0]
"""

import argparse
import dataclasses
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "src"))

from gpgswarm.checkpoint import load_checkpoint
from gpgswarm.reinforce import transfer_eval
from gpgswarm.world import Formation


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--checkpoint", default="runs/small/checkpoint.yaml")
    ap.add_argument("--n-robots", type=int, default=10)
    ap.add_argument("--formation", default="circle=1.5")
    ap.add_argument("--episodes", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--arena", type=float, default=None,
                    help="half width of the target arena (default: scaled)")
    args = ap.parse_args()

    ck = load_checkpoint(args.checkpoint)
    scale = (args.n_robots / ck.world.n_robots) ** 0.5
    half_width = args.arena or ck.world.arena_half_width * scale
    target = dataclasses.replace(
        ck.world, n_robots=args.n_robots, n_goals=args.n_robots,
        arena_half_width=half_width,
        max_steps=max(ck.world.max_steps, 100))
    formation = Formation.parse(args.formation)

    report = transfer_eval(ck.params, ck.world, ck.graph, target, formation,
                           args.episodes, args.seed)
    print(f"trained on {ck.world.n_robots} robots,"
          f" deployed on {args.n_robots} ({args.formation})")
    print(f"coverage {report.coverage_rate:.2f},"
          f" time-to-goals {report.mean_time_to_goals:.2f} s,"
          f" collision rate {report.collision_rate:.2f},"
          f" min separation {report.mean_min_separation:.3f} m")


if __name__ == "__main__":
    main()
