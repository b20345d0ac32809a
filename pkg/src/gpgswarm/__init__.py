"""Graph-filter policies for unlabeled multi-robot goal coverage."""

__version__ = "0.1.0"

from .capt import Assignment, TrajectoryPlan, capt_plan, compare, hungarian
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import ConfigError, ExperimentConfig, load_experiment
from .gcn import GcnParams, LayerSpec, forward, init_params
from .graphs import GraphSpec, build_graph, filter_apply, shift_operator
from .reinforce import TrainConfig, evaluate, train, transfer_eval
from .world import (Formation, Obstacle, WorldConfig, WorldState,
                    spawn_world, step)

__all__ = [
    "__version__",
    "Assignment", "TrajectoryPlan", "capt_plan", "compare", "hungarian",
    "Checkpoint", "load_checkpoint", "save_checkpoint",
    "ConfigError", "ExperimentConfig", "load_experiment",
    "GcnParams", "LayerSpec", "forward", "init_params",
    "GraphSpec", "build_graph", "filter_apply", "shift_operator",
    "TrainConfig", "evaluate", "train", "transfer_eval",
    "Formation", "Obstacle", "WorldConfig", "WorldState",
    "spawn_world", "step",
]
