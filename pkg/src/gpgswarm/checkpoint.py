"""Versioned YAML checkpoints for trained policies.

A checkpoint stores the full-precision filter taps and log-stds together
with the world and graph settings the policy was trained under, so that
transfer runs can verify sensing widths and graph degree without needing
the original config file.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass

import numpy as np
import yaml

from .config import (ConfigError, graph_from_dict, graph_to_dict,
                     world_from_dict, world_to_dict)
from .gcn import GcnParams, LayerSpec
from .graphs import GraphSpec
from .world import WorldConfig

CHECKPOINT_FORMAT = "gpgswarm-checkpoint/1"


@dataclass(frozen=True)
class Checkpoint:
    """A trained policy plus the settings it was trained under."""

    params: GcnParams
    world: WorldConfig
    graph: GraphSpec


def save_checkpoint(path, params: GcnParams, world_config: WorldConfig,
                    graph: GraphSpec) -> None:
    """Write params and their training context to `path` atomically."""
    doc = {
        "format_version": CHECKPOINT_FORMAT,
        "layer_specs": [dataclasses.asdict(s) for s in params.specs],
        "taps": [t.tolist() for t in params.taps],
        "log_std": params.log_std.tolist(),
        "world": world_to_dict(world_config),
        "graph": graph_to_dict(graph),
    }
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)
    os.replace(tmp, path)


def load_checkpoint(path) -> Checkpoint:
    """Read a checkpoint written by save_checkpoint."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"could not parse {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path} is not a checkpoint file")
    version = doc.get("format_version")
    if version != CHECKPOINT_FORMAT:
        raise ConfigError(
            f"unsupported checkpoint format {version!r},"
            f" expected {CHECKPOINT_FORMAT!r}")
    for key in ("layer_specs", "taps", "log_std", "world", "graph"):
        if key not in doc:
            raise ConfigError(f"checkpoint missing '{key}'")
    try:
        specs = tuple(LayerSpec(**entry) for entry in doc["layer_specs"])
    except TypeError as exc:
        raise ConfigError(f"checkpoint layer_specs: {exc}") from exc
    taps = tuple(np.asarray(t, dtype=np.float64) for t in doc["taps"])
    log_std = np.asarray(doc["log_std"], dtype=np.float64)
    params = GcnParams(specs=specs, taps=taps, log_std=log_std)
    params.validate()
    world_config = world_from_dict(doc["world"])
    graph = graph_from_dict(doc["graph"])
    return Checkpoint(params=params, world=world_config, graph=graph)
