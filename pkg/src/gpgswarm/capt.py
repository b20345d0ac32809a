"""Centralized assignment-and-plan baseline (CAPT).

Given full knowledge of all robot and goal positions, assign goals by
minimum total squared distance (Hungarian algorithm) and drive every
robot along a straight line so that all arrive simultaneously. Under the
squared-distance assignment and sufficient spawn separation, the straight
lines never bring two robots closer than twice their radius. Serves as
the time-to-goals yardstick the learned policies are compared against.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import reinforce, world
from .gcn import GcnParams
from .graphs import GraphSpec
from .world import Formation, WorldConfig, WorldState

COMPARE_COLUMNS = ("formation", "n_robots", "capt_time_s", "gpg_time_s",
                   "gap_s", "gpg_coverage")


class NonFiniteCost(ValueError):
    """Cost matrix contains NaN or inf."""


@dataclass(frozen=True)
class Assignment:
    """Bijection robot index -> goal index with its total cost."""

    perm: tuple
    total_cost: float


def hungarian(cost: np.ndarray) -> Assignment:
    """Minimum-cost perfect matching on a square cost matrix, O(N^3).

    Shortest-augmenting-path formulation with dual potentials: rows are
    inserted one at a time and each insertion grows the matching along the
    cheapest alternating path. Returns an exact optimum, not a heuristic.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError(f"cost matrix must be square, got {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise NonFiniteCost("cost matrix must be finite")
    n = cost.shape[0]
    inf = math.inf
    # 1-indexed duals and matching; p[j] = row matched to column j
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    p = [0] * (n + 1)
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [inf] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = cost[i0 - 1][j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    perm = [0] * n
    for j in range(1, n + 1):
        if p[j]:
            perm[p[j] - 1] = j - 1
    total = 0.0
    for i in range(n):
        total += float(cost[i][perm[i]])
    return Assignment(tuple(perm), total)


@dataclass(frozen=True)
class TrajectoryPlan:
    """Synchronized straight-line trajectories.

    positions(t) interpolates start -> assigned goal at constant progress
    t / t_final, clamped at arrival; every robot reaches its goal exactly
    at t_final.
    """

    starts: np.ndarray  # (N, 2)
    goals: np.ndarray  # (N, 2), already ordered by the assignment
    t_final: float
    assignment: Assignment

    def positions(self, t: float) -> np.ndarray:
        if self.t_final == 0.0 or t >= self.t_final:
            return self.goals.copy()
        frac = max(t, 0.0) / self.t_final
        return self.starts + frac * (self.goals - self.starts)


def capt_plan(state: WorldState, v_max: float, squared: bool = True) -> TrajectoryPlan:
    """Assign goals and lay out synchronized straight-line trajectories.

    The assignment minimizes total squared distance by default (the choice
    that yields the non-crossing, collision-avoiding paths); plain distance
    is available for sensitivity checks. Arrival time is the longest leg
    divided by v_max, shared by all robots.
    """
    if v_max <= 0:
        raise ValueError("v_max must be > 0")
    p = state.robot_positions
    g = state.goal_positions
    if p.shape[0] != g.shape[0]:
        raise ValueError("need equally many robots and goals")
    diff = p[:, None, :] - g[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    cost = d2 if squared else np.sqrt(d2)
    assignment = hungarian(cost)
    goals_ordered = g[list(assignment.perm)]
    legs = np.linalg.norm(goals_ordered - p, axis=1)
    t_final = float(legs.max() / v_max) if len(legs) else 0.0
    return TrajectoryPlan(p.copy(), goals_ordered, t_final, assignment)


@dataclass(frozen=True)
class PlanRun:
    """simulate_plan output: sampled trajectory plus summary metrics."""

    times: np.ndarray  # (S,)
    positions: np.ndarray  # (S, N, 2)
    min_separation: float
    time_to_goals: float


def simulate_plan(plan: TrajectoryPlan, dt: float, psi: float) -> PlanRun:
    """Sample the plan every dt through arrival.

    Reports the smallest pairwise robot separation over all samples and
    the first sample time at which the coverage condition (each goal held
    by exactly one robot within psi) is satisfied.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    n_steps = max(int(math.ceil(plan.t_final / dt)), 0)
    times = [k * dt for k in range(n_steps + 1)]
    if times[-1] < plan.t_final:
        times.append((n_steps + 1) * dt)
    samples = []
    min_sep = math.inf
    time_to_goals = math.nan
    for t in times:
        pos = plan.positions(t)
        samples.append(pos)
        state = WorldState(pos, plan.goals, ())
        min_sep = min(min_sep, world.min_separation(state))
        if math.isnan(time_to_goals) and world.goals_covered(
                world.assignment_matrix(state, psi)):
            time_to_goals = t
    return PlanRun(np.array(times), np.stack(samples), min_sep, time_to_goals)


def default_v_max(config: WorldConfig) -> float:
    """Fastest speed the simulated robots can sustain: the action bound for
    velocity control, the per-step displacement bound over dt otherwise."""
    if config.dynamics == world.SINGLE_INTEGRATOR:
        return config.max_action
    return config.max_action / config.dt


def plan_following_controller(plan: TrajectoryPlan, config: WorldConfig):
    """Actions that make the simulated dynamics track the plan samples.

    Used for self-comparison: a world rolled out under this controller
    reproduces the plan trajectory, so its time-to-goals matches the
    plan's.
    """

    def controller(state: WorldState, t: int) -> np.ndarray:
        target = plan.positions((t + 1) * config.dt)
        delta = target - state.robot_positions
        if config.dynamics == world.SINGLE_INTEGRATOR:
            return delta / config.dt
        return delta

    return controller


@dataclass
class CompareRow:
    formation: str
    n_robots: int
    capt_time_s: float
    gpg_time_s: float
    gap_s: float
    gpg_coverage: float


@dataclass
class ComparisonReport:
    rows: list = field(default_factory=list)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(COMPARE_COLUMNS)
            for r in self.rows:
                writer.writerow([r.formation, r.n_robots, repr(r.capt_time_s),
                                 repr(r.gpg_time_s), repr(r.gap_s),
                                 repr(r.gpg_coverage)])


def _controller_episode(state0: WorldState, controller, config: WorldConfig):
    """Roll the world under an explicit controller; mirrors policy episodes."""
    state = state0
    for t in range(config.max_steps):
        state = world.step(state, controller(state, t), config)
        if world.goals_covered(
                world.assignment_matrix(state, config.coverage_radius)):
            return True, config.dt * (t + 1)
    return False, math.nan


def compare(params: GcnParams | None, world_config: WorldConfig, formations,
            episodes: int, seed, graph: GraphSpec | None = None,
            v_max: float | None = None, squared: bool = True,
            controller_factory=None) -> ComparisonReport:
    """Time-to-goals of the centralized planner vs the learned policy.

    formations is a list of (label, Formation); both methods run from
    identical spawns per episode. gap_s averages (policy time - plan time)
    over the episodes the policy covered; capt_time_s averages over all
    episodes. controller_factory replaces the policy with an explicit
    controller built per episode from (plan, world_config), used for
    self-checks.
    """
    if world_config.obstacles:
        raise ValueError("comparison requires an obstacle-free world")
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    v = v_max if v_max is not None else default_v_max(world_config)
    report = ComparisonReport()
    for fi, (label, formation) in enumerate(formations):
        capt_times, gpg_times, gaps, covered_flags = [], [], [], []
        for ep in range(episodes):
            key = (seed, fi, ep) if not isinstance(seed, tuple) else (*seed, fi, ep)
            root = np.random.SeedSequence(list(key))
            spawn_ss, _ = root.spawn(2)
            state0 = world.spawn_world(world_config, spawn_ss, formation)
            plan = capt_plan(state0, v, squared=squared)
            run = simulate_plan(plan, world_config.dt, world_config.coverage_radius)
            capt_times.append(run.time_to_goals)
            if controller_factory is not None:
                ctl = controller_factory(plan, world_config)
                covered, t_gpg = _controller_episode(state0, ctl, world_config)
            else:
                cfg = reinforce.TrainConfig(
                    world=world_config, layer_specs=params.specs,
                    graph=graph or GraphSpec(), formation=formation)
                ep_run = reinforce.rollout_episode(params, cfg, key,
                                                   deterministic=True,
                                                   state0=state0)
                covered = ep_run.covered
                t_gpg = world_config.dt * ep_run.steps if covered else math.nan
            covered_flags.append(covered)
            if covered:
                gpg_times.append(t_gpg)
                gaps.append(t_gpg - run.time_to_goals)
        report.rows.append(CompareRow(
            formation=label,
            n_robots=world_config.n_robots,
            capt_time_s=float(np.mean(capt_times)),
            gpg_time_s=float(np.mean(gpg_times)) if gpg_times else math.nan,
            gap_s=float(np.mean(gaps)) if gaps else math.nan,
            gpg_coverage=float(np.mean(covered_flags)),
        ))
    return report
