"""Experiment configuration: strict YAML in, dataclasses out.

A config file has up to six top-level sections::

    world:      # WorldConfig fields
    graph:      # GraphSpec fields
    network:    # hidden_width/n_layers/filter_order, or an explicit layers list
    train:      # optimization settings (seed optional, may come from the CLI)
    formation:  # goal layout, e.g. "uniform_random", "circle=3.0", or
                # {explicit: [[x, y], ...]}
    out_dir:    # default output directory (optional)

Parsing is strict: any key not recognized in its section is an error that
names the offending key, so typos fail loudly instead of silently falling
back to defaults.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass

import yaml

from . import world as _world
from .gcn import ACTION_DIM, IDENTITY, TANH, LayerSpec
from .graphs import GraphSpec
from .reinforce import (ADAM, BASELINE_MEAN, RETURN_TO_GO, TrainConfig)
from .world import Formation, Obstacle, WorldConfig


class ConfigError(ValueError):
    """A config file is malformed or contains an unknown key."""


_WORLD_KEYS = {f.name for f in dataclasses.fields(WorldConfig)}
_GRAPH_KEYS = {f.name for f in dataclasses.fields(GraphSpec)}
_NETWORK_KEYS = {"hidden_width", "n_layers", "filter_order", "layers"}
_LAYER_KEYS = {f.name for f in dataclasses.fields(LayerSpec)}
_TRAIN_KEYS = {"gamma", "episodes_per_update", "total_updates", "learning_rate",
               "seed", "baseline", "estimator", "optimizer", "init_log_std",
               "learn_std", "target_coverage", "target_patience",
               "eval_every", "eval_episodes", "n_workers"}
_TOP_KEYS = {"world", "graph", "network", "train", "formation", "out_dir"}


def _require_mapping(obj, section: str) -> dict:
    if obj is None:
        return {}
    if not isinstance(obj, dict):
        raise ConfigError(f"section '{section}' must be a mapping")
    return obj


def _reject_unknown(mapping: dict, allowed: set, section: str) -> None:
    for key in mapping:
        if key not in allowed:
            raise ConfigError(f"unknown key '{key}' in section '{section}'")


def _parse_obstacles(raw) -> tuple:
    if raw is None:
        return ()
    if not isinstance(raw, list):
        raise ConfigError("world.obstacles must be a list")
    out = []
    for i, entry in enumerate(raw):
        entry = _require_mapping(entry, f"world.obstacles[{i}]")
        _reject_unknown(entry, {"center", "radius"}, f"world.obstacles[{i}]")
        if "center" not in entry or "radius" not in entry:
            raise ConfigError(
                f"world.obstacles[{i}] needs both 'center' and 'radius'")
        out.append(Obstacle(tuple(entry["center"]), float(entry["radius"])))
    return tuple(out)


def parse_formation(raw) -> Formation:
    """Build a Formation from a YAML value (string spec or explicit points)."""
    if isinstance(raw, str):
        return Formation.parse(raw)
    mapping = _require_mapping(raw, "formation")
    _reject_unknown(mapping, {"explicit"}, "formation")
    if "explicit" not in mapping:
        raise ConfigError("formation mapping must carry an 'explicit' key")
    points = mapping["explicit"]
    if not isinstance(points, list) or not points:
        raise ConfigError("formation.explicit must be a non-empty list of points")
    return Formation.explicit([tuple(p) for p in points])


def world_from_dict(raw: dict) -> WorldConfig:
    raw = dict(_require_mapping(raw, "world"))
    _reject_unknown(raw, _WORLD_KEYS, "world")
    if "obstacles" in raw:
        raw["obstacles"] = _parse_obstacles(raw["obstacles"])
    if "reward_weights" in raw:
        raw["reward_weights"] = tuple(raw["reward_weights"])
    try:
        cfg = WorldConfig(**raw)
    except TypeError as exc:
        raise ConfigError(f"world: {exc}") from exc
    cfg.validate()
    return cfg


def world_to_dict(cfg: WorldConfig) -> dict:
    doc = dataclasses.asdict(cfg)
    doc["obstacles"] = [{"center": [float(c) for c in o.center],
                         "radius": float(o.radius)} for o in cfg.obstacles]
    doc["reward_weights"] = [float(w) for w in cfg.reward_weights]
    return doc


def graph_from_dict(raw: dict) -> GraphSpec:
    raw = _require_mapping(raw, "graph")
    _reject_unknown(raw, _GRAPH_KEYS, "graph")
    spec = GraphSpec(**raw)
    spec.validate()
    return spec


def graph_to_dict(spec: GraphSpec) -> dict:
    doc = dataclasses.asdict(spec)
    doc["threshold"] = float(spec.threshold)
    return doc


def build_layer_specs(f_in: int, hidden_width: int, n_layers: int,
                      filter_order: int) -> tuple:
    """A standard stack: tanh hidden layers, linear 2-wide output layer."""
    if n_layers < 1:
        raise ConfigError("network.n_layers must be >= 1")
    if n_layers == 1:
        return (LayerSpec(f_in, ACTION_DIM, filter_order, IDENTITY),)
    layers = [LayerSpec(f_in, hidden_width, filter_order, TANH)]
    for _ in range(n_layers - 2):
        layers.append(LayerSpec(hidden_width, hidden_width, filter_order, TANH))
    layers.append(LayerSpec(hidden_width, ACTION_DIM, filter_order, IDENTITY))
    return tuple(layers)


def _parse_network(raw: dict, f_in: int) -> tuple:
    raw = _require_mapping(raw, "network")
    _reject_unknown(raw, _NETWORK_KEYS, "network")
    if "layers" in raw:
        extras = set(raw) - {"layers"}
        if extras:
            raise ConfigError(
                "network: 'layers' cannot be combined with "
                f"'{sorted(extras)[0]}'")
        specs = []
        for i, entry in enumerate(raw["layers"]):
            entry = _require_mapping(entry, f"network.layers[{i}]")
            _reject_unknown(entry, _LAYER_KEYS, f"network.layers[{i}]")
            try:
                specs.append(LayerSpec(**entry))
            except TypeError as exc:
                raise ConfigError(f"network.layers[{i}]: {exc}") from exc
        return tuple(specs)
    return build_layer_specs(
        f_in=f_in,
        hidden_width=int(raw.get("hidden_width", 32)),
        n_layers=int(raw.get("n_layers", 2)),
        filter_order=int(raw.get("filter_order", 2)),
    )


@dataclass
class ExperimentConfig:
    """Everything needed to run one experiment, minus the seed decision."""

    world: WorldConfig
    graph: GraphSpec
    layer_specs: tuple
    formation: Formation
    gamma: float = 0.95
    episodes_per_update: int = 16
    total_updates: int = 1500
    learning_rate: float = 3e-3
    seed: int | None = None
    baseline: str = BASELINE_MEAN
    estimator: str = RETURN_TO_GO
    optimizer: str = ADAM
    init_log_std: float = math.log(0.5)
    learn_std: bool = True
    target_coverage: float | None = None
    target_patience: int = 3
    eval_every: int = 25
    eval_episodes: int = 20
    n_workers: int = 1
    out_dir: str | None = None

    def to_train_config(self, seed: int | None = None) -> TrainConfig:
        """Resolve into a TrainConfig; the argument overrides the file seed."""
        resolved = self.seed if seed is None else seed
        if resolved is None:
            raise ConfigError(
                "no seed given: set train.seed in the config or pass --seed")
        cfg = TrainConfig(
            world=self.world,
            layer_specs=self.layer_specs,
            graph=self.graph,
            formation=self.formation,
            gamma=self.gamma,
            episodes_per_update=self.episodes_per_update,
            total_updates=self.total_updates,
            learning_rate=self.learning_rate,
            seed=int(resolved),
            baseline=self.baseline,
            estimator=self.estimator,
            optimizer=self.optimizer,
            init_log_std=self.init_log_std,
            learn_std=self.learn_std,
            target_coverage=self.target_coverage,
            target_patience=self.target_patience,
            eval_every=self.eval_every,
            eval_episodes=self.eval_episodes,
            n_workers=self.n_workers,
        )
        cfg.validate()
        return cfg


def experiment_from_dict(doc: dict) -> ExperimentConfig:
    doc = _require_mapping(doc, "<top level>")
    _reject_unknown(doc, _TOP_KEYS, "<top level>")
    world_cfg = world_from_dict(doc.get("world", {}))
    graph = graph_from_dict(doc.get("graph", {}))
    layer_specs = _parse_network(doc.get("network", {}),
                                 _world.feature_width(world_cfg))
    formation = parse_formation(doc.get("formation", "uniform_random"))

    train = _require_mapping(doc.get("train", {}), "train")
    _reject_unknown(train, _TRAIN_KEYS, "train")
    kwargs = {}
    for key in ("gamma", "learning_rate", "init_log_std"):
        if key in train:
            kwargs[key] = float(train[key])
    for key in ("episodes_per_update", "total_updates", "eval_every",
                "eval_episodes", "n_workers"):
        if key in train:
            kwargs[key] = int(train[key])
    for key in ("baseline", "estimator", "optimizer"):
        if key in train:
            kwargs[key] = str(train[key])
    if "learn_std" in train:
        if not isinstance(train["learn_std"], bool):
            raise ConfigError("train.learn_std must be a boolean")
        kwargs["learn_std"] = train["learn_std"]
    if train.get("target_coverage") is not None:
        kwargs["target_coverage"] = float(train["target_coverage"])
    if "target_patience" in train:
        kwargs["target_patience"] = int(train["target_patience"])
    if train.get("seed") is not None:
        kwargs["seed"] = int(train["seed"])

    out_dir = doc.get("out_dir")
    if out_dir is not None and not isinstance(out_dir, str):
        raise ConfigError("out_dir must be a string")
    return ExperimentConfig(world=world_cfg, graph=graph,
                            layer_specs=layer_specs, formation=formation,
                            out_dir=out_dir, **kwargs)


def load_experiment(path) -> ExperimentConfig:
    """Read and validate an experiment config file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"could not parse {path}: {exc}") from exc
    if doc is None:
        doc = {}
    return experiment_from_dict(doc)


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()
