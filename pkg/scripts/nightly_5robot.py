"""Nightly-scale convergence check: 5 robots, 3 seeds.

Trains configs/pointmass_5.yaml from three seeds and prints the trailing
training coverage for each; run this before cutting a release. The same
check runs as the pytest nightly marker:

    pytest -m nightly

Usage:
    python scripts/nightly_5robot.py [--seeds 0 1 2] [--updates 2500]
"""

import argparse
import dataclasses
import pathlib
import sys
import time

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "src"))

from gpgswarm.config import load_experiment
from gpgswarm.reinforce import train


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default="configs/pointmass_5.yaml")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--updates", type=int, default=None)
    args = ap.parse_args()

    exp = load_experiment(args.config)
    converged = 0
    for seed in args.seeds:
        cfg = exp.to_train_config(seed)
        if args.updates is not None:
            cfg = dataclasses.replace(cfg, total_updates=args.updates)
        t0 = time.perf_counter()
        params, log = train(cfg)
        tail = [r.coverage for r in log.records[-7:]]
        tail_cov = sum(tail) / len(tail)
        ok = tail_cov >= 0.9
        converged += ok
        print(f"seed {seed}: trailing coverage {tail_cov:.3f}"
              f" ({'ok' if ok else 'below 0.9'}),"
              f" {time.perf_counter() - t0:.0f} s")
    print(f"{converged}/{len(args.seeds)} seeds converged")
    sys.exit(0 if converged >= 2 else 1)


if __name__ == "__main__":
    main()
