"""Train the 3-robot point-mass benchmark and report held-out metrics.

Usage:
    python scripts/train_small_swarm.py [--config configs/pointmass_3.yaml]
                                        [--seed 0] [--out runs/small]
"""

import argparse
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "src"))

from gpgswarm.checkpoint import save_checkpoint
from gpgswarm.config import load_experiment
from gpgswarm.reinforce import evaluate, train


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default="configs/pointmass_3.yaml")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/small")
    args = ap.parse_args()

    exp = load_experiment(args.config)
    cfg = exp.to_train_config(args.seed)
    params, log = train(cfg)

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "checkpoint.yaml", params, exp.world, exp.graph)
    log.to_csv(out / "trainlog.csv")

    for r in log.records[-5:]:
        print(f"update {r.update:4d}  return {r.mean_return:8.2f}"
              f"  coverage {r.coverage:.2f}  mean_len {r.mean_len:.1f}")
    report = evaluate(params, exp.world, 50, (args.seed, 10_000),
                      formation=exp.formation, graph=exp.graph)
    print(f"held-out: coverage {report.coverage_rate:.2f},"
          f" time-to-goals {report.mean_time_to_goals:.2f} s,"
          f" collisions {report.collision_rate:.2f}")
    print(f"checkpoint: {out / 'checkpoint.yaml'}")


if __name__ == "__main__":
    main()
