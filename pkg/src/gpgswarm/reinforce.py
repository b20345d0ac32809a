"""Policy-gradient training on the swarm world.

Rollouts run under a graph fixed at spawn time: the policy samples from
per-robot Gaussians whose means come from the graph-filter network, the
world steps, and the centralized reward is shared by all robots. The
gradient estimator weights per-step log densities by discounted
return-to-go (optionally mean-baselined), or by the whole-trajectory
return in the literal variant. Training is fully seeded: every episode
derives its own random stream from (seed, episode index), so collection
order cannot change results.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import gcn, world
from .gcn import GcnGradient, GcnParams
from .graphs import GraphSpec, ShiftOperator, build_graph, shift_operator
from .world import Formation, WorldConfig

RETURN_TO_GO = "return_to_go"
WHOLE_TRAJECTORY = "whole_trajectory"

BASELINE_NONE = "none"
BASELINE_MEAN = "mean_return"

ADAM = "adam"
SGD = "sgd"

TRAINLOG_COLUMNS = ("update", "episodes", "mean_return", "coverage",
                    "collisions", "mean_len", "wall_s")


class EmptyBatch(ValueError):
    """policy_gradient called with no episodes."""


class NonFiniteGradient(RuntimeError):
    """Gradient contained NaN or inf; the update was skipped."""


class FeatureWidthMismatch(ValueError):
    """World observation width does not match the network's input width."""


class TopologyMismatch(ValueError):
    """Graph construction differs from the one used in training."""


@dataclass
class TrainConfig:
    world: WorldConfig
    layer_specs: tuple
    graph: GraphSpec = field(default_factory=GraphSpec)
    formation: Formation = field(default_factory=Formation.uniform_random)
    gamma: float = 0.95
    episodes_per_update: int = 16
    total_updates: int = 1500
    learning_rate: float = 3e-3
    seed: int = 0
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

    def validate(self) -> None:
        self.world.validate()
        self.graph.validate()
        gcn.validate_specs(self.layer_specs)
        want = world.feature_width(self.world)
        have = self.layer_specs[0].f_in
        if want != have:
            raise FeatureWidthMismatch(
                f"world observations have width {want}, network expects {have}")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.episodes_per_update < 1:
            raise ValueError("episodes_per_update must be >= 1")
        if self.total_updates < 0:
            raise ValueError("total_updates must be >= 0")
        if self.baseline not in (BASELINE_NONE, BASELINE_MEAN):
            raise ValueError(f"baseline must be {BASELINE_NONE!r} or {BASELINE_MEAN!r}")
        if self.estimator not in (RETURN_TO_GO, WHOLE_TRAJECTORY):
            raise ValueError(f"estimator must be {RETURN_TO_GO!r} or {WHOLE_TRAJECTORY!r}")
        if self.optimizer not in (ADAM, SGD):
            raise ValueError(f"optimizer must be {ADAM!r} or {SGD!r}")
        if self.target_coverage is not None and not 0 < self.target_coverage <= 1:
            raise ValueError("target_coverage must be in (0, 1]")
        if self.target_patience < 1:
            raise ValueError("target_patience must be >= 1")
        if self.eval_every < 0:
            raise ValueError("eval_every must be >= 0")
        if self.eval_episodes < 1:
            raise ValueError("eval_episodes must be >= 1")
        if self.n_workers < 1:
            raise ValueError("n_workers must be >= 1")


@dataclass
class Episode:
    """One rollout under a fixed graph."""

    shift: ShiftOperator
    observations: np.ndarray  # (steps, N, F)
    actions: np.ndarray  # (steps, N, 2)
    log_probs: np.ndarray  # (steps, N)
    rewards: np.ndarray  # (steps,), centralized scalar per step
    covered: bool
    steps: int
    positions: np.ndarray  # (steps + 1, N, 2) including spawn
    state0: world.WorldState
    collided: bool
    min_sep: float

    @property
    def episode_return(self) -> float:
        return float(self.rewards.sum())


@dataclass
class RolloutBatch:
    episodes: list


@dataclass
class EvalReport:
    """Aggregate metrics over evaluation episodes.

    mean_time_to_goals averages dt * steps over covered episodes only and
    is NaN when nothing covered; all fields are NaN for an empty report.
    """

    episodes: int
    coverage_rate: float
    mean_time_to_goals: float
    collision_rate: float
    mean_min_separation: float


@dataclass
class TrainRecord:
    update: int
    episodes: int  # cumulative episode count
    mean_return: float
    coverage: float
    collisions: float
    mean_len: float
    wall_s: float


@dataclass
class TrainLog:
    records: list = field(default_factory=list)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(TRAINLOG_COLUMNS)
            for r in self.records:
                writer.writerow([r.update, r.episodes, repr(r.mean_return),
                                 repr(r.coverage), repr(r.collisions),
                                 repr(r.mean_len), repr(r.wall_s)])


def _episode_seed_key(seed) -> tuple:
    if isinstance(seed, (tuple, list)):
        return tuple(int(s) for s in seed)
    return (int(seed),)


def rollout_episode(params: GcnParams, config: TrainConfig, episode_seed,
                    deterministic: bool = False,
                    state0: world.WorldState | None = None) -> Episode:
    """Run one episode; the graph is built once from the spawn positions.

    episode_seed is a SeedSequence entropy key (int or tuple). The spawn
    and the action noise use independent child streams, so a pre-supplied
    state0 does not shift the action noise.
    """
    root = np.random.SeedSequence(list(_episode_seed_key(episode_seed)))
    spawn_ss, action_ss = root.spawn(2)
    w = config.world
    if state0 is None:
        state0 = world.spawn_world(w, spawn_ss, config.formation)
    if w.n_robots == 1:
        # no pairwise graph exists; the trivial self-loop operator keeps
        # the single robot's own features flowing for any filter order
        shift = ShiftOperator(np.ones((1, 1)), config.graph.normalization)
    else:
        graph = build_graph(state0.robot_positions, config.graph)
        shift = shift_operator(graph, config.graph.normalization)
    rng = np.random.default_rng(action_ss)

    obs_seq, act_seq, lp_seq, rew_seq, pos_seq = [], [], [], [], [state0.robot_positions]
    state = state0
    covered = False
    collided = False
    min_sep = world.min_separation(state0)
    for _ in range(w.max_steps):
        obs = world.observe(state, w)
        dist = gcn.forward(shift, obs, params)
        actions, lps = gcn.sample_actions(dist, rng, deterministic=deterministic)
        state = world.step(state, actions, w)
        obs_seq.append(obs)
        act_seq.append(actions)
        lp_seq.append(lps)
        rew_seq.append(world.reward(state, w))
        pos_seq.append(state.robot_positions)
        sep = world.min_separation(state)
        min_sep = min(min_sep, sep)
        if sep <= w.min_separation:
            collided = True
        if world.goals_covered(world.assignment_matrix(state, w.coverage_radius)):
            covered = True
            break
    steps = len(rew_seq)
    return Episode(
        shift=shift,
        observations=np.stack(obs_seq),
        actions=np.stack(act_seq),
        log_probs=np.stack(lp_seq),
        rewards=np.array(rew_seq),
        covered=covered,
        steps=steps,
        positions=np.stack(pos_seq),
        state0=state0,
        collided=collided,
        min_sep=min_sep,
    )


def collect_rollouts(params: GcnParams, config: TrainConfig, seed) -> RolloutBatch:
    """Collect episodes_per_update episodes, each on its own derived stream.

    Results are identical for any n_workers because episode i's randomness
    depends only on (seed, i).
    """
    key = _episode_seed_key(seed)
    indices = range(config.episodes_per_update)
    if config.n_workers > 1:
        with ThreadPoolExecutor(max_workers=config.n_workers) as pool:
            episodes = list(pool.map(
                lambda i: rollout_episode(params, config, key + (i,)), indices))
    else:
        episodes = [rollout_episode(params, config, key + (i,)) for i in indices]
    return RolloutBatch(episodes)


def discounted_returns(rewards, gamma: float) -> np.ndarray:
    """G_t = sum_{k >= t} gamma^(k-t) r_k by backward recursion."""
    if not 0 < gamma <= 1:
        raise ValueError("gamma must be in (0, 1]")
    rewards = np.asarray(rewards, dtype=np.float64)
    out = np.empty_like(rewards)
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def policy_gradient(batch: RolloutBatch, params: GcnParams,
                    config: TrainConfig) -> GcnGradient:
    """Average over episodes of the weighted log-likelihood gradient.

    Weights are discounted returns-to-go minus the batch-mean episode
    return when the mean baseline is on; the whole-trajectory variant
    weights every step by the episode's total discounted return (no
    baseline). The result ascends the objective.
    """
    if not batch.episodes:
        raise EmptyBatch("no episodes to estimate a gradient from")
    returns = [discounted_returns(ep.rewards, config.gamma)
               for ep in batch.episodes]
    if config.estimator == WHOLE_TRAJECTORY:
        weight_seqs = [np.full(len(g), g[0]) for g in returns]
    else:
        b = 0.0
        if config.baseline == BASELINE_MEAN:
            b = float(np.mean([g[0] for g in returns]))
        weight_seqs = [g - b for g in returns]
    total = None
    for ep, weights in zip(batch.episodes, weight_seqs):
        g = gcn.backward(ep.shift, ep.observations, ep.actions, weights, params)
        total = g if total is None else total + g
    return total * (1.0 / len(batch.episodes))


@dataclass
class OptState:
    optimizer: str
    step: int = 0
    m: list | None = None
    v: list | None = None


def init_opt_state(params: GcnParams, optimizer: str = ADAM) -> OptState:
    if optimizer == ADAM:
        zeros = [np.zeros_like(a) for a in params.arrays()]
        return OptState(ADAM, 0, zeros, [z.copy() for z in zeros])
    if optimizer == SGD:
        return OptState(SGD, 0)
    raise ValueError(f"optimizer must be {ADAM!r} or {SGD!r}")


def optimizer_update(params: GcnParams, gradient: GcnGradient,
                     opt_state: OptState, learning_rate: float):
    """One ascent step. Adam uses decay 0.9 / 0.999 and stabilizer 1e-8;
    plain mode adds learning_rate * gradient. Raises NonFiniteGradient
    (leaving params and opt_state untouched) on NaN or inf entries."""
    grads = gradient.arrays()
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient("gradient contains NaN or inf")
    arrays = params.arrays()
    if opt_state.optimizer == SGD:
        new_arrays = [a + learning_rate * g for a, g in zip(arrays, grads)]
        return params.with_arrays(new_arrays), OptState(SGD, opt_state.step + 1)
    b1, b2, eps = 0.9, 0.999, 1e-8
    t = opt_state.step + 1
    m = [b1 * m_i + (1 - b1) * g for m_i, g in zip(opt_state.m, grads)]
    v = [b2 * v_i + (1 - b2) * g * g for v_i, g in zip(opt_state.v, grads)]
    new_arrays = []
    for a, m_i, v_i in zip(arrays, m, v):
        m_hat = m_i / (1 - b1 ** t)
        v_hat = v_i / (1 - b2 ** t)
        new_arrays.append(a + learning_rate * m_hat / (np.sqrt(v_hat) + eps))
    return params.with_arrays(new_arrays), OptState(ADAM, t, m, v)


def _eval_key(report: EvalReport) -> tuple:
    t = report.mean_time_to_goals
    return (report.coverage_rate, -(t if math.isfinite(t) else math.inf))


def train(config: TrainConfig):
    """Run the full loop: collect, weight, differentiate, step.

    Returns (params, TrainLog). When periodic evaluation is on
    (eval_every > 0), the returned params are the checkpoint with the best
    deterministic-eval coverage (ties broken by faster coverage);
    otherwise the final params. With target_coverage set, training stops
    once the trailing-100-episode training coverage has held at or above
    the target for target_patience consecutive updates. Aborts cleanly
    after more than 10 consecutive non-finite gradients.
    """
    config.validate()
    params = gcn.init_params(config.layer_specs,
                             np.random.SeedSequence([config.seed, 0]),
                             config.init_log_std)
    opt_state = init_opt_state(params, config.optimizer)
    log = TrainLog()
    best: tuple | None = None
    best_params = params
    nonfinite_streak = 0
    episodes_done = 0
    trail_window = -(-100 // config.episodes_per_update)
    target_streak = 0

    def run_eval(update_idx: int) -> None:
        nonlocal best, best_params
        report = evaluate(params, config.world, config.eval_episodes,
                          (config.seed, 2, update_idx), deterministic=True,
                          formation=config.formation, graph=config.graph)
        key = _eval_key(report)
        if best is None or key > best:
            best = key
            best_params = params

    for u in range(config.total_updates):
        t0 = time.perf_counter()
        batch = collect_rollouts(params, config, (config.seed, 1, u))
        eps = batch.episodes
        episodes_done += len(eps)
        try:
            grad = policy_gradient(batch, params, config)
            if not config.learn_std:
                # fixed exploration scale: late-training score terms grow
                # as 1/sigma^2, so an annealing sigma destabilizes
                # near-converged policies
                grad = GcnGradient(grad.taps, np.zeros_like(grad.log_std))
            params, opt_state = optimizer_update(params, grad, opt_state,
                                                 config.learning_rate)
            nonfinite_streak = 0
        except NonFiniteGradient:
            nonfinite_streak += 1
            if nonfinite_streak > 10:
                break
        log.records.append(TrainRecord(
            update=u,
            episodes=episodes_done,
            mean_return=float(np.mean([ep.episode_return for ep in eps])),
            coverage=float(np.mean([ep.covered for ep in eps])),
            collisions=float(np.mean([ep.collided for ep in eps])),
            mean_len=float(np.mean([ep.steps for ep in eps])),
            wall_s=time.perf_counter() - t0,
        ))
        if config.eval_every and (u + 1) % config.eval_every == 0:
            run_eval(u + 1)
        if config.target_coverage is not None and len(log.records) >= trail_window:
            trail = sum(r.coverage for r in log.records[-trail_window:])
            if trail / trail_window >= config.target_coverage:
                target_streak += 1
                if target_streak >= config.target_patience:
                    break
            else:
                target_streak = 0
    if config.eval_every and config.total_updates:
        run_eval(config.total_updates + 1)
        return best_params, log
    return params, log


def eval_episodes(params: GcnParams, world_config: WorldConfig, episodes: int,
                  seed, deterministic: bool = True,
                  formation: Formation | None = None,
                  graph: GraphSpec | None = None) -> list:
    """Run fixed-policy episodes and return them for inspection."""
    if world.feature_width(world_config) != params.specs[0].f_in:
        raise FeatureWidthMismatch(
            f"world observations have width {world.feature_width(world_config)},"
            f" network expects {params.specs[0].f_in}")
    cfg = TrainConfig(world=world_config, layer_specs=params.specs,
                      graph=graph or GraphSpec(),
                      formation=formation or Formation.uniform_random())
    key = _episode_seed_key(seed)
    return [rollout_episode(params, cfg, key + (i,), deterministic=deterministic)
            for i in range(episodes)]


def summarize_episodes(episodes: list, dt: float) -> EvalReport:
    """Aggregate a list of episodes into an EvalReport."""
    if not episodes:
        nan = float("nan")
        return EvalReport(0, nan, nan, nan, nan)
    times = [dt * ep.steps for ep in episodes if ep.covered]
    return EvalReport(
        episodes=len(episodes),
        coverage_rate=float(np.mean([ep.covered for ep in episodes])),
        mean_time_to_goals=float(np.mean(times)) if times else float("nan"),
        collision_rate=float(np.mean([ep.collided for ep in episodes])),
        mean_min_separation=float(np.mean([ep.min_sep for ep in episodes])),
    )


def evaluate(params: GcnParams, world_config: WorldConfig, episodes: int,
             seed, deterministic: bool = True,
             formation: Formation | None = None,
             graph: GraphSpec | None = None) -> EvalReport:
    """Run fixed-policy episodes and aggregate coverage/collision metrics.

    time-to-goals for an episode is dt * (first step index at which the
    coverage condition holds); episodes that never cover count against
    coverage_rate and are excluded from the time average.
    """
    eps = eval_episodes(params, world_config, episodes, seed,
                        deterministic=deterministic, formation=formation,
                        graph=graph)
    return summarize_episodes(eps, world_config.dt)


def transfer_eval(params: GcnParams, train_world: WorldConfig,
                  train_graph: GraphSpec, world_config: WorldConfig,
                  formation: Formation, episodes: int, seed,
                  graph: GraphSpec | None = None) -> EvalReport:
    """Apply filters trained on a small swarm to a larger one, unchanged.

    The sensing counts and the graph construction must match training:
    that keeps the observation width and the per-node topology the filters
    were trained on. No parameter is modified.
    """
    graph = graph or train_graph
    train_sensing = (train_world.n_goal_obs, train_world.n_robot_obs,
                     train_world.n_obstacle_obs)
    new_sensing = (world_config.n_goal_obs, world_config.n_robot_obs,
                   world_config.n_obstacle_obs)
    if train_sensing != new_sensing:
        raise FeatureWidthMismatch(
            f"sensing counts {new_sensing} differ from training {train_sensing}")
    if graph.method != train_graph.method:
        raise TopologyMismatch(
            f"graph method {graph.method!r} differs from training"
            f" {train_graph.method!r}")
    if graph.method == "knn" and graph.k != train_graph.k:
        raise TopologyMismatch(
            f"graph degree k={graph.k} differs from training k={train_graph.k}")
    return evaluate(params, world_config, episodes, seed, deterministic=True,
                    formation=formation, graph=graph)
