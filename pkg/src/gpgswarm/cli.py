"""Command line front end: train, eval, transfer, compare.

Exit codes: 0 on success, 1 for config and usage errors (malformed file,
unknown key, missing seed, width or topology mismatch), 2 for runtime
failures (infeasible spawns, non-finite gradients, unexpected errors).

Each command writes its artifacts into one output directory, resolved as
--out flag, then the GPGSWARM_OUT environment variable, then the config's
out_dir, then a per-command default under runs/. A manifest.yaml listing
the inputs (config hash, seed, package version) and the produced files is
written last, atomically, so a manifest's presence means the run finished.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import pathlib
import sys
from datetime import datetime, timezone

import yaml

from . import __version__
from .capt import compare
from .checkpoint import load_checkpoint, save_checkpoint
from .config import (ConfigError, file_sha256, load_experiment,
                     parse_formation)
from .reinforce import (EvalReport, eval_episodes, summarize_episodes,
                        train, transfer_eval)
from .world import Formation, write_trajectory

MANIFEST_FORMAT = "gpgswarm-manifest/1"
REPORT_FORMAT = "gpgswarm-report/1"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _resolve_out_dir(flag, config_out, default: str) -> pathlib.Path:
    env = os.environ.get("GPGSWARM_OUT")
    return pathlib.Path(flag or env or config_out or default)


def _write_manifest(out_dir: pathlib.Path, command: str, config_path,
                    seed: int, outputs: list, started: str,
                    finished: str) -> None:
    doc = {
        "format_version": MANIFEST_FORMAT,
        "command": command,
        "config_path": str(config_path),
        "config_sha256": file_sha256(config_path),
        "seed": int(seed),
        "package_version": __version__,
        "started": started,
        "finished": finished,
        "outputs": sorted(outputs),
    }
    path = out_dir / "manifest.yaml"
    tmp = out_dir / "manifest.yaml.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)
    os.replace(tmp, path)


def _report_doc(report: EvalReport) -> dict:
    return {
        "format_version": REPORT_FORMAT,
        "episodes": report.episodes,
        "coverage_rate": report.coverage_rate,
        "mean_time_to_goals": report.mean_time_to_goals,
        "collision_rate": report.collision_rate,
        "mean_min_separation": report.mean_min_separation,
    }


def _write_report(path, report: EvalReport) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(_report_doc(report), fh, sort_keys=False)


def _print_report(report: EvalReport) -> None:
    for key, value in _report_doc(report).items():
        if key == "format_version":
            continue
        print(f"{key}: {value}")


def _dump_episodes(out_dir: pathlib.Path, episodes, world_config) -> list:
    """Write one trajectory file per episode; returns the relative paths."""
    traj_dir = out_dir / "trajectories"
    traj_dir.mkdir(parents=True, exist_ok=True)
    names = []
    for i, ep in enumerate(episodes):
        flags = [False] * (ep.steps - 1) + [ep.covered]
        name = f"trajectories/ep_{i:03d}.jsonl"
        write_trajectory(out_dir / name, ep.positions, ep.rewards, flags,
                         ep.state0, world_config)
        names.append(name)
    return names


def _eval_seed(args, exp) -> int:
    if args.seed is not None:
        return args.seed
    if exp.seed is not None:
        return exp.seed
    return 0


def cmd_train(args) -> int:
    exp = load_experiment(args.config)
    train_config = exp.to_train_config(args.seed)
    if args.parallel_episodes is not None:
        if args.parallel_episodes < 1:
            raise ConfigError("--parallel-episodes must be >= 1")
        train_config = dataclasses.replace(train_config,
                                           n_workers=args.parallel_episodes)
    out_dir = _resolve_out_dir(args.out, exp.out_dir, "runs/train")
    started = _now()
    params, log = train(train_config)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out_dir / "checkpoint.yaml", params, exp.world, exp.graph)
    log.to_csv(out_dir / "trainlog.csv")
    outputs = ["checkpoint.yaml", "trainlog.csv"]
    _write_manifest(out_dir, "train", args.config, train_config.seed,
                    outputs, started, _now())
    if log.records:
        last = log.records[-1]
        print(f"trained {len(log.records)} updates, {last.episodes} episodes,"
              f" final coverage {last.coverage}")
    print(f"outputs in {out_dir}")
    return 0


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    exp = load_experiment(args.config)
    seed = _eval_seed(args, exp)
    started = _now()
    episodes = eval_episodes(ckpt.params, exp.world, args.episodes, seed,
                             deterministic=not args.stochastic,
                             formation=exp.formation, graph=exp.graph)
    report = summarize_episodes(episodes, exp.world.dt)
    out_dir = _resolve_out_dir(args.out, exp.out_dir, "runs/eval")
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_report(out_dir / "eval_report.yaml", report)
    outputs = ["eval_report.yaml"]
    outputs += _dump_episodes(out_dir, episodes, exp.world)
    _write_manifest(out_dir, "eval", args.config, seed, outputs,
                    started, _now())
    _print_report(report)
    return 0


def cmd_transfer(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    exp = load_experiment(args.config)
    formation = (parse_formation(args.formation) if args.formation
                 else exp.formation)
    seed = _eval_seed(args, exp)
    # guards only: sensing widths and graph construction must match training
    transfer_eval(ckpt.params, ckpt.world, ckpt.graph, exp.world, formation,
                  0, seed, graph=exp.graph)
    started = _now()
    episodes = eval_episodes(ckpt.params, exp.world, args.episodes, seed,
                             deterministic=True, formation=formation,
                             graph=exp.graph)
    report = summarize_episodes(episodes, exp.world.dt)
    out_dir = _resolve_out_dir(args.out, exp.out_dir, "runs/transfer")
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_report(out_dir / "transfer_report.yaml", report)
    outputs = ["transfer_report.yaml"]
    outputs += _dump_episodes(out_dir, episodes, exp.world)
    _write_manifest(out_dir, "transfer", args.config, seed, outputs,
                    started, _now())
    _print_report(report)
    return 0


def cmd_compare(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    exp = load_experiment(args.config)
    if args.formations:
        labeled = [(f"F{i + 1}", Formation.parse(spec.strip()))
                   for i, spec in enumerate(args.formations.split(","))]
    else:
        labeled = [("F1", exp.formation)]
    seed = _eval_seed(args, exp)
    started = _now()
    report = compare(ckpt.params, exp.world, labeled, args.episodes, seed,
                     graph=exp.graph)
    out_dir = _resolve_out_dir(args.out, exp.out_dir, "runs/compare")
    out_dir.mkdir(parents=True, exist_ok=True)
    report.to_csv(out_dir / "comparison.csv")
    _write_manifest(out_dir, "compare", args.config, seed,
                    ["comparison.csv"], started, _now())
    for row in report.rows:
        print(f"{row.formation}: plan {row.capt_time_s} s,"
              f" policy {row.gpg_time_s} s, gap {row.gap_s} s,"
              f" coverage {row.gpg_coverage}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gpgswarm",
        description="Decentralized swarm goal coverage: train and evaluate"
                    " graph-filter policies, and compare them against the"
                    " centralized assignment planner.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a policy from a config")
    p_train.add_argument("config", help="experiment config (YAML)")
    p_train.add_argument("--seed", type=int, default=None,
                         help="overrides train.seed from the config")
    p_train.add_argument("--out", default=None, help="output directory")
    p_train.add_argument("--parallel-episodes", type=int, default=None,
                         metavar="N", help="collect rollouts with N threads")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a trained checkpoint")
    p_eval.add_argument("checkpoint")
    p_eval.add_argument("config")
    p_eval.add_argument("--episodes", type=int, default=20)
    p_eval.add_argument("--seed", type=int, default=None)
    p_eval.add_argument("--stochastic", action="store_true",
                        help="sample actions instead of taking the mean")
    p_eval.add_argument("--out", default=None)
    p_eval.set_defaults(func=cmd_eval)

    p_tr = sub.add_parser("transfer",
                          help="run a trained policy on a different swarm")
    p_tr.add_argument("checkpoint")
    p_tr.add_argument("config")
    p_tr.add_argument("--formation", default=None,
                      help='goal layout, e.g. "circle=3.0" or "line=1.0"')
    p_tr.add_argument("--episodes", type=int, default=20)
    p_tr.add_argument("--seed", type=int, default=None)
    p_tr.add_argument("--out", default=None)
    p_tr.set_defaults(func=cmd_transfer)

    p_cmp = sub.add_parser("compare",
                           help="centralized planner vs learned policy")
    p_cmp.add_argument("checkpoint")
    p_cmp.add_argument("config")
    p_cmp.add_argument("--formations", default=None,
                       help='comma-separated layouts, e.g. "circle=2,circle=4"')
    p_cmp.add_argument("--episodes", type=int, default=10)
    p_cmp.add_argument("--seed", type=int, default=None)
    p_cmp.add_argument("--out", default=None)
    p_cmp.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code if isinstance(exc.code, int) else 1
        return 0 if code == 0 else 1
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, IsADirectoryError, NotADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        raise
    except Exception as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
