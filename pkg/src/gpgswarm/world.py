"""2D multi-robot world: spawning, sensing, dynamics and rewards.

Robots are homogeneous disks of radius R in a square arena centered at the
origin. A world holds N robots and N goals (plus optional static disk
obstacles); robots must end up covering all goals, one robot per goal,
without ever closing below the minimum separation. States are immutable
values: ``step`` returns a new state, so episodes can be replayed or run
in parallel without shared mutable state.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

TRAJECTORY_FORMAT = "gpgswarm-trajectory/1"

POINT_MASS = "point_mass"
SINGLE_INTEGRATOR = "single_integrator"
SPARSE = "sparse"
SHAPED = "shaped"

# Candidate draws allowed before giving up on a rejection-sampled spawn.
SPAWN_ATTEMPTS = 10_000


class SpawnInfeasible(RuntimeError):
    """Rejection sampling could not place robots/goals under the constraints."""


class EpisodeOver(RuntimeError):
    """step() was called on a state that already reached max_steps."""


@dataclass(frozen=True)
class Obstacle:
    """Static disk obstacle given by center and radius."""

    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "radius", float(self.radius))


@dataclass(frozen=True)
class Formation:
    """Goal layout used at spawn time.

    kind is one of "uniform_random", "circle", "line", "grid", "explicit".
    Circle takes a radius, line and grid take a spacing, explicit takes the
    goal list verbatim.
    """

    kind: str
    radius: float | None = None
    spacing: float | None = None
    goals: tuple[tuple[float, float], ...] | None = None

    @classmethod
    def uniform_random(cls) -> "Formation":
        return cls("uniform_random")

    @classmethod
    def circle(cls, radius: float) -> "Formation":
        return cls("circle", radius=float(radius))

    @classmethod
    def line(cls, spacing: float) -> "Formation":
        return cls("line", spacing=float(spacing))

    @classmethod
    def grid(cls, spacing: float) -> "Formation":
        return cls("grid", spacing=float(spacing))

    @classmethod
    def explicit(cls, goals) -> "Formation":
        return cls("explicit", goals=tuple((float(x), float(y)) for x, y in goals))

    @classmethod
    def parse(cls, text: str) -> "Formation":
        """Parse compact CLI syntax: "uniform_random", "circle=3.0", "line=1.5", "grid=2.0"."""
        kind, _, arg = text.partition("=")
        kind = kind.strip()
        if kind in ("uniform", "uniform_random"):
            return cls.uniform_random()
        if kind == "circle":
            return cls.circle(float(arg))
        if kind == "line":
            return cls.line(float(arg))
        if kind == "grid":
            return cls.grid(float(arg))
        raise ValueError(f"unknown formation spec {text!r}")


@dataclass
class WorldConfig:
    """Static parameters of the environment.

    Sensing counts: each robot observes its n_goal_obs nearest goals,
    n_robot_obs nearest other robots and n_obstacle_obs nearest obstacle
    centers, all as relative offsets.
    """

    n_robots: int
    n_goals: int | None = None  # defaults to n_robots
    robot_radius: float = 0.1
    min_separation: float = 0.25
    coverage_radius: float = 0.2
    arena_half_width: float = 5.0
    dt: float = 0.1
    max_steps: int = 200
    dynamics: str = POINT_MASS
    max_action: float = 1.0
    n_goal_obs: int = 2
    n_robot_obs: int = 1
    n_obstacle_obs: int = 0
    obstacles: tuple[Obstacle, ...] = ()
    reward_mode: str = SHAPED
    sparse_bonus: float = 10.0
    collision_penalty: float = 1.0
    reward_weights: tuple[float, float, float] = (1.0, 0.5, 0.5)

    def __post_init__(self):
        if self.n_goals is None:
            self.n_goals = self.n_robots
        self.obstacles = tuple(self.obstacles)

    def validate(self) -> None:
        if self.n_robots < 1:
            raise ValueError("n_robots must be >= 1")
        if self.n_goals != self.n_robots:
            raise ValueError("n_goals must equal n_robots (square assignment)")
        if self.min_separation < 2.0 * self.robot_radius:
            raise ValueError("min_separation must be >= 2 * robot_radius")
        if self.coverage_radius <= 0:
            raise ValueError("coverage_radius must be > 0")
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.max_action <= 0:
            raise ValueError("max_action must be > 0")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.arena_half_width <= 0:
            raise ValueError("arena_half_width must be > 0")
        if self.dynamics not in (POINT_MASS, SINGLE_INTEGRATOR):
            raise ValueError(f"dynamics must be {POINT_MASS!r} or {SINGLE_INTEGRATOR!r}")
        if self.reward_mode not in (SPARSE, SHAPED):
            raise ValueError(f"reward_mode must be {SPARSE!r} or {SHAPED!r}")
        if not 0 <= self.n_goal_obs <= self.n_goals:
            raise ValueError("n_goal_obs must be in [0, n_goals]")
        if not 0 <= self.n_robot_obs <= self.n_robots - 1:
            raise ValueError("n_robot_obs must be in [0, n_robots - 1]")
        if not 0 <= self.n_obstacle_obs <= len(self.obstacles):
            raise ValueError("n_obstacle_obs must be in [0, len(obstacles)]")
        if len(self.reward_weights) != 3:
            raise ValueError("reward_weights must have 3 entries")
        for ob in self.obstacles:
            if ob.radius <= 0:
                raise ValueError("obstacles must have radius > 0")


def feature_width(config: WorldConfig) -> int:
    """Observation row width F = 2 * (n_goal_obs + n_robot_obs + n_obstacle_obs)."""
    return 2 * (config.n_goal_obs + config.n_robot_obs + config.n_obstacle_obs)


@dataclass(frozen=True)
class WorldState:
    """Simulation ground truth. Arrays are read-only float64."""

    robot_positions: np.ndarray  # (N, 2)
    goal_positions: np.ndarray  # (M, 2)
    obstacles: tuple[Obstacle, ...]
    step: int = 0

    def __post_init__(self):
        for name in ("robot_positions", "goal_positions"):
            # copy so freezing never touches a caller-owned array
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def _obstacle_arrays(obstacles) -> tuple[np.ndarray, np.ndarray]:
    if not obstacles:
        return np.zeros((0, 2)), np.zeros(0)
    centers = np.array([ob.center for ob in obstacles], dtype=np.float64)
    radii = np.array([ob.radius for ob in obstacles], dtype=np.float64)
    return centers, radii


def _spawn_goals(config: WorldConfig, rng: np.random.Generator,
                 formation: Formation) -> np.ndarray:
    m = config.n_goals
    hw = config.arena_half_width
    min_sep = 2.0 * config.coverage_radius
    centers, radii = _obstacle_arrays(config.obstacles)

    if formation.kind == "explicit":
        if formation.goals is None or len(formation.goals) != m:
            raise ValueError(f"explicit formation needs exactly {m} goals")
        goals = np.array(formation.goals, dtype=np.float64)
    elif formation.kind == "circle":
        r = formation.radius
        theta = 2.0 * np.pi * np.arange(m) / max(m, 1)
        goals = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    elif formation.kind == "line":
        s = formation.spacing
        xs = (np.arange(m) - (m - 1) / 2.0) * s
        goals = np.column_stack([xs, np.zeros(m)])
    elif formation.kind == "grid":
        s = formation.spacing
        cols = int(math.ceil(math.sqrt(m)))
        rows = int(math.ceil(m / cols))
        idx = np.arange(m)
        gx = (idx % cols - (cols - 1) / 2.0) * s
        gy = (idx // cols - (rows - 1) / 2.0) * s
        goals = np.column_stack([gx, gy])
    elif formation.kind == "uniform_random":
        goals = np.empty((m, 2))
        placed = 0
        for _ in range(SPAWN_ATTEMPTS):
            if placed == m:
                break
            cand = rng.uniform(-hw, hw, size=2)
            if placed and np.min(np.linalg.norm(goals[:placed] - cand, axis=1)) <= min_sep:
                continue
            if len(radii) and np.any(np.linalg.norm(centers - cand, axis=1) <= radii + config.coverage_radius):
                continue
            goals[placed] = cand
            placed += 1
        if placed < m:
            raise SpawnInfeasible(
                f"could not place {m} goals with pairwise separation > {min_sep}")
    else:
        raise ValueError(f"unknown formation kind {formation.kind!r}")

    if np.any(np.abs(goals) > hw):
        raise SpawnInfeasible("formation places goals outside the arena")
    if m >= 2:
        diff = goals[:, None, :] - goals[None, :, :]
        d = np.linalg.norm(diff, axis=2)
        np.fill_diagonal(d, np.inf)
        if d.min() <= min_sep:
            raise SpawnInfeasible(
                f"goal formation violates pairwise separation > {min_sep}")
    if len(radii):
        d = np.linalg.norm(goals[:, None, :] - centers[None, :, :], axis=2)
        if np.any(d <= radii[None, :]):
            raise SpawnInfeasible("formation places a goal inside an obstacle")
    return goals


def _spawn_robots(config: WorldConfig, rng: np.random.Generator) -> np.ndarray:
    n = config.n_robots
    hw = config.arena_half_width
    centers, radii = _obstacle_arrays(config.obstacles)
    robots = np.empty((n, 2))
    placed = 0
    for _ in range(SPAWN_ATTEMPTS):
        if placed == n:
            break
        cand = rng.uniform(-hw, hw, size=2)
        if placed and np.min(np.linalg.norm(robots[:placed] - cand, axis=1)) <= config.min_separation:
            continue
        if len(radii) and np.any(
                np.linalg.norm(centers - cand, axis=1) <= radii + config.robot_radius):
            continue
        robots[placed] = cand
        placed += 1
    if placed < n:
        raise SpawnInfeasible(
            f"could not place {n} robots with pairwise separation > {config.min_separation}")
    return robots


def spawn_world(config: WorldConfig, seed, formation: Formation) -> WorldState:
    """Create the initial state for an episode.

    Deterministic for a fixed (config, seed, formation). Goals are placed
    first (so the robot stream does not depend on the formation kind drawing
    from the rng), then robots are rejection-sampled with pairwise separation
    strictly above min_separation and outside all obstacles. Goals are kept
    more than two coverage radii apart so the coverage condition is
    unambiguous. ``seed`` is anything numpy's default_rng accepts.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    goals = _spawn_goals(config, rng, formation)
    robots = _spawn_robots(config, rng)
    return WorldState(robots, goals, config.obstacles, step=0)


def observe(state: WorldState, config: WorldConfig) -> np.ndarray:
    """Per-robot local features: [goal offsets, robot offsets, obstacle offsets].

    Row n concatenates the offsets (neighbor minus own position) to the
    n_goal_obs nearest goals, the n_robot_obs nearest other robots and the
    n_obstacle_obs nearest obstacle centers, each block sorted by ascending
    distance with ties broken by lower entity index. Shape (N, F) with
    F = 2 * (n_goal_obs + n_robot_obs + n_obstacle_obs).
    """
    pos = state.robot_positions
    n = pos.shape[0]
    blocks = []

    if config.n_goal_obs:
        off = state.goal_positions[None, :, :] - pos[:, None, :]
        dist = np.linalg.norm(off, axis=2)
        idx = np.argsort(dist, axis=1, kind="stable")[:, : config.n_goal_obs]
        sel = np.take_along_axis(off, idx[:, :, None], axis=1)
        blocks.append(sel.reshape(n, -1))

    if config.n_robot_obs:
        off = pos[None, :, :] - pos[:, None, :]
        dist = np.linalg.norm(off, axis=2)
        np.fill_diagonal(dist, np.inf)  # a robot never observes itself
        idx = np.argsort(dist, axis=1, kind="stable")[:, : config.n_robot_obs]
        sel = np.take_along_axis(off, idx[:, :, None], axis=1)
        blocks.append(sel.reshape(n, -1))

    if config.n_obstacle_obs:
        centers, _ = _obstacle_arrays(state.obstacles)
        off = centers[None, :, :] - pos[:, None, :]
        dist = np.linalg.norm(off, axis=2)
        idx = np.argsort(dist, axis=1, kind="stable")[:, : config.n_obstacle_obs]
        sel = np.take_along_axis(off, idx[:, :, None], axis=1)
        blocks.append(sel.reshape(n, -1))

    if not blocks:
        return np.zeros((n, 0))
    return np.hstack(blocks)


def step(state: WorldState, actions: np.ndarray, config: WorldConfig) -> WorldState:
    """Advance one time step.

    Actions are clamped componentwise to [-max_action, max_action]. Point
    mass treats the action as a position increment; single integrator treats
    it as a commanded velocity integrated over dt. Positions are clamped to
    the arena.
    """
    if state.step >= config.max_steps:
        raise EpisodeOver(f"episode already at step {state.step} >= {config.max_steps}")
    actions = np.asarray(actions, dtype=np.float64)
    if actions.shape != state.robot_positions.shape:
        raise ValueError(f"actions shape {actions.shape} does not match robots")
    if not np.all(np.isfinite(actions)):
        raise ValueError("actions must be finite")
    a = np.clip(actions, -config.max_action, config.max_action)
    if config.dynamics == SINGLE_INTEGRATOR:
        a = a * config.dt
    pos = state.robot_positions + a
    hw = config.arena_half_width
    np.clip(pos, -hw, hw, out=pos)
    return WorldState(pos, state.goal_positions, state.obstacles, state.step + 1)


def min_separation(state: WorldState) -> float:
    """Minimum pairwise Euclidean distance between robots (inf for < 2 robots)."""
    pos = state.robot_positions
    if pos.shape[0] < 2:
        return math.inf
    diff = pos[:, None, :] - pos[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    iu = np.triu_indices(pos.shape[0], k=1)
    return float(math.sqrt(d2[iu].min()))


def assignment_matrix(state: WorldState, coverage_radius: float) -> np.ndarray:
    """Binary N x M matrix with 1 where robot i is within the coverage radius of goal j."""
    diff = state.robot_positions[:, None, :] - state.goal_positions[None, :, :]
    dist = np.linalg.norm(diff, axis=2)
    return (dist <= coverage_radius).astype(np.int64)


def goals_covered(phi: np.ndarray) -> bool:
    """True iff phi^T phi is the identity: every goal covered by exactly one robot."""
    phi = np.asarray(phi, dtype=np.int64)
    gram = phi.T @ phi
    return bool(np.array_equal(gram, np.eye(phi.shape[1], dtype=np.int64)))


def _obstacle_surface_distances(state: WorldState, config: WorldConfig) -> np.ndarray:
    """Surface-to-surface distances robot x obstacle: center distance - radii."""
    centers, radii = _obstacle_arrays(state.obstacles)
    if not len(radii):
        return np.zeros((state.robot_positions.shape[0], 0))
    d = np.linalg.norm(
        state.robot_positions[:, None, :] - centers[None, :, :], axis=2)
    return d - radii[None, :] - config.robot_radius


def reward(state: WorldState, config: WorldConfig) -> float:
    """Centralized scalar reward, shared by all robots.

    Sparse mode pays +sparse_bonus when the coverage condition holds,
    -collision_penalty when any robot pair is at or below min_separation
    (or any robot's obstacle surface distance is at or below it), else 0.

    Shaped mode is the weighted sum w1*r_G + w2*r_R + w3*r_O where r_G is
    minus the largest goal-to-nearest-robot distance, and r_R / r_O charge
    collision_penalty per robot pair closer than min_separation and per
    robot-obstacle surface distance below it.
    """
    delta = config.min_separation
    beta = config.collision_penalty
    pos = state.robot_positions

    if config.reward_mode == SPARSE:
        if goals_covered(assignment_matrix(state, config.coverage_radius)):
            return float(config.sparse_bonus)
        hit = min_separation(state) <= delta
        if not hit and len(state.obstacles):
            hit = bool(np.any(_obstacle_surface_distances(state, config) <= delta))
        return -float(beta) if hit else 0.0

    dist = np.linalg.norm(pos[:, None, :] - state.goal_positions[None, :, :], axis=2)
    r_goal = -float(dist.min(axis=0).max())

    r_robot = 0.0
    n = pos.shape[0]
    if n >= 2:
        diff = pos[:, None, :] - pos[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        iu = np.triu_indices(n, k=1)
        r_robot = -beta * float(np.count_nonzero(d2[iu] < delta * delta))

    r_obst = 0.0
    if len(state.obstacles):
        surf = _obstacle_surface_distances(state, config)
        r_obst = -beta * float(np.count_nonzero(surf < delta))

    w1, w2, w3 = config.reward_weights
    return w1 * r_goal + w2 * r_robot + w3 * r_obst


def write_trajectory(path, positions_seq: np.ndarray, rewards, covered_flags,
                     state0: WorldState, config: WorldConfig) -> None:
    """Dump one episode as line-delimited JSON records {step, robot_positions, reward, covered}.

    positions_seq has shape (T+1, N, 2) including the spawn positions; rewards
    and covered_flags have length T and describe the post-action states. The
    step-0 record is recomputed from the spawn state. The first line is a
    header carrying the format version and the static episode geometry.
    """
    positions_seq = np.asarray(positions_seq)
    header = {
        "format_version": TRAJECTORY_FORMAT,
        "n_robots": int(positions_seq.shape[1]),
        "goal_positions": state0.goal_positions.tolist(),
        "obstacles": [{"center": list(ob.center), "radius": ob.radius}
                      for ob in state0.obstacles],
    }
    r0 = reward(state0, config)
    c0 = goals_covered(assignment_matrix(state0, config.coverage_radius))
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        rows = [(0, positions_seq[0], r0, c0)]
        for t in range(len(rewards)):
            rows.append((t + 1, positions_seq[t + 1], rewards[t], covered_flags[t]))
        for step_idx, pos, rew, cov in rows:
            fh.write(json.dumps({
                "step": int(step_idx),
                "robot_positions": np.asarray(pos).tolist(),
                "reward": float(rew),
                "covered": bool(cov),
            }) + "\n")
