import itertools
import math

import numpy as np
import pytest

from gpgswarm.capt import (
    Assignment,
    ComparisonReport,
    CompareRow,
    NonFiniteCost,
    capt_plan,
    compare,
    default_v_max,
    hungarian,
    plan_following_controller,
    simulate_plan,
)
from gpgswarm.world import Formation, Obstacle, WorldConfig, WorldState


def brute_force(cost):
    n = len(cost)
    best_total, best_perm = None, None
    for perm in itertools.permutations(range(n)):
        total = 0.0
        for i in range(n):
            total += float(cost[i][perm[i]])
        if best_total is None or total < best_total:
            best_total, best_perm = total, perm
    return best_perm, best_total


def sample_separated(rng, n, min_dist, half_width=3.0):
    pts = []
    while len(pts) < n:
        cand = rng.uniform(-half_width, half_width, 2)
        if all(np.linalg.norm(cand - p) > min_dist for p in pts):
            pts.append(cand)
    return np.array(pts)


class TestHungarian:
    def test_diagonal_optimal(self):
        a = hungarian(np.array([[1.0, 2.0], [2.0, 1.0]]))
        assert a.perm == (0, 1)
        assert a.total_cost == 2.0

    def test_degenerate_ties_unique_cost(self):
        a = hungarian(np.array([[0.0, 1.0], [0.0, 1.0]]))
        assert a.total_cost == 1.0
        assert sorted(a.perm) == [0, 1]

    def test_matches_brute_force_random(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            n = int(rng.integers(2, 7))
            cost = rng.uniform(0, 10, size=(n, n))
            a = hungarian(cost)
            bf_perm, bf_total = brute_force(cost)
            assert a.perm == bf_perm
            assert a.total_cost == bf_total

    def test_negative_costs(self):
        rng = np.random.default_rng(1)
        cost = rng.uniform(-5, 5, size=(5, 5))
        assert hungarian(cost).total_cost == brute_force(cost)[1]

    def test_constant_shift_invariance(self):
        rng = np.random.default_rng(2)
        cost = rng.uniform(0, 10, size=(5, 5))
        base = hungarian(cost)
        shifted = hungarian(cost + 3.7)
        assert shifted.perm == base.perm
        assert shifted.total_cost == pytest.approx(base.total_cost + 5 * 3.7)

    def test_rejects_nonfinite(self):
        with pytest.raises(NonFiniteCost):
            hungarian(np.array([[1.0, np.nan], [0.0, 1.0]]))
        with pytest.raises(NonFiniteCost):
            hungarian(np.array([[1.0, np.inf], [0.0, 1.0]]))

    def test_rejects_nonsquare(self):
        with pytest.raises(ValueError):
            hungarian(np.zeros((2, 3)))

    def test_perm_is_bijection(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            cost = rng.uniform(0, 1, size=(7, 7))
            perm = hungarian(cost).perm
            assert sorted(perm) == list(range(7))


class TestCaptPlan:
    def test_single_robot_midpoint(self):
        state = WorldState(np.array([[0.0, 0.0]]), np.array([[1.0, 0.0]]), ())
        plan = capt_plan(state, v_max=1.0)
        assert plan.t_final == 1.0
        assert np.allclose(plan.positions(0.5), [[0.5, 0.0]])

    def test_crossing_assignment_rejected(self):
        state = WorldState(np.array([[0.0, 0.0], [10.0, 0.0]]),
                           np.array([[10.0, 1.0], [0.0, 1.0]]), ())
        plan = capt_plan(state, v_max=1.0)
        # goal (0,1) is index 1: the squared cost of swapping is 2 vs 202
        assert plan.assignment.perm == (1, 0)
        assert np.allclose(plan.goals, [[0.0, 1.0], [10.0, 1.0]])

    def test_assignment_matches_brute_force(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            p = rng.uniform(-4, 4, size=(5, 2))
            g = rng.uniform(-4, 4, size=(5, 2))
            state = WorldState(p, g, ())
            plan = capt_plan(state, v_max=1.0)
            d2 = ((p[:, None, :] - g[None, :, :]) ** 2).sum(axis=2)
            assert plan.assignment.perm == brute_force(d2)[0]

    def test_plain_distance_flag(self):
        rng = np.random.default_rng(5)
        p = rng.uniform(-4, 4, size=(4, 2))
        g = rng.uniform(-4, 4, size=(4, 2))
        state = WorldState(p, g, ())
        plan = capt_plan(state, v_max=1.0, squared=False)
        d = np.sqrt(((p[:, None, :] - g[None, :, :]) ** 2).sum(axis=2))
        assert plan.assignment.perm == brute_force(d)[0]

    def test_synchronized_exact_arrival(self):
        rng = np.random.default_rng(6)
        p = rng.uniform(-4, 4, size=(6, 2))
        g = rng.uniform(-4, 4, size=(6, 2))
        plan = capt_plan(WorldState(p, g, ()), v_max=2.0)
        assert np.array_equal(plan.positions(plan.t_final), plan.goals)
        assert np.array_equal(plan.positions(plan.t_final + 5.0), plan.goals)

    def test_zero_distance_plan(self):
        p = np.array([[1.0, 1.0], [-1.0, -1.0]])
        plan = capt_plan(WorldState(p, p, ()), v_max=1.0)
        assert plan.t_final == 0.0
        assert np.array_equal(plan.positions(0.0), p)

    def test_rejects_bad_v_max(self):
        state = WorldState(np.zeros((1, 2)), np.ones((1, 2)), ())
        with pytest.raises(ValueError):
            capt_plan(state, v_max=0.0)


class TestSimulatePlan:
    def test_single_robot_reaches_at_t_final(self):
        state = WorldState(np.array([[0.0, 0.0]]), np.array([[1.0, 0.0]]), ())
        plan = capt_plan(state, v_max=1.0)
        run = simulate_plan(plan, dt=0.1, psi=0.05)
        assert run.min_separation == math.inf
        assert run.time_to_goals == pytest.approx(plan.t_final)

    def test_large_psi_covers_early(self):
        state = WorldState(np.array([[0.0, 0.0]]), np.array([[1.0, 0.0]]), ())
        plan = capt_plan(state, v_max=1.0)
        run = simulate_plan(plan, dt=0.1, psi=0.5)
        assert run.time_to_goals < plan.t_final

    def test_parallel_paths_separation(self):
        state = WorldState(np.array([[0.0, 0.0], [5.0, 0.0]]),
                           np.array([[0.0, 1.0], [5.0, 1.0]]), ())
        plan = capt_plan(state, v_max=1.0)
        run = simulate_plan(plan, dt=0.05, psi=0.1)
        assert run.min_separation == pytest.approx(5.0)

    def test_sample_grid_covers_arrival(self):
        state = WorldState(np.array([[0.0, 0.0]]), np.array([[0.37, 0.0]]), ())
        plan = capt_plan(state, v_max=1.0)
        run = simulate_plan(plan, dt=0.1, psi=1e-9)
        assert run.times[-1] >= plan.t_final
        assert np.array_equal(run.positions[-1], plan.goals)

    def test_separation_guarantee_sweep(self):
        # squared-cost assignment plus sufficiently separated spawns keeps
        # every pair further apart than two radii along the whole plan
        radius = 0.1
        margin = 2 * math.sqrt(2) * radius
        rng = np.random.default_rng(7)
        for _ in range(30):
            n = int(rng.integers(2, 9))
            p = sample_separated(rng, n, margin)
            g = sample_separated(rng, n, margin)
            plan = capt_plan(WorldState(p, g, ()), v_max=1.0)
            run = simulate_plan(plan, dt=plan.t_final / 400 if plan.t_final else 0.01,
                                psi=0.05)
            assert run.min_separation > 2 * radius

    def test_rejects_bad_dt(self):
        state = WorldState(np.zeros((1, 2)), np.ones((1, 2)), ())
        plan = capt_plan(state, v_max=1.0)
        with pytest.raises(ValueError):
            simulate_plan(plan, dt=0.0, psi=0.1)


class TestCompare:
    def world_config(self, **kw):
        base = dict(n_robots=3, n_goal_obs=2, n_robot_obs=1, max_steps=200)
        base.update(kw)
        return WorldConfig(**base)

    def test_self_comparison_zero_gap(self):
        # the plan-following controller reproduces the planned trajectory,
        # so policy time equals plan time on every episode
        w = self.world_config()
        report = compare(None, w, [("F1", Formation.circle(2.0)),
                                   ("F2", Formation.circle(3.0))],
                         episodes=4, seed=0,
                         controller_factory=plan_following_controller)
        assert len(report.rows) == 2
        for row in report.rows:
            assert row.gpg_coverage == 1.0
            assert row.gap_s == 0.0

    def test_self_comparison_single_integrator(self):
        w = self.world_config(dynamics="single_integrator", max_steps=400)
        report = compare(None, w, [("F1", Formation.circle(2.0))],
                         episodes=3, seed=1,
                         controller_factory=plan_following_controller)
        assert report.rows[0].gap_s == 0.0

    def test_rejects_obstacles(self):
        w = self.world_config(obstacles=(Obstacle((0.0, 0.0), 0.5),))
        with pytest.raises(ValueError):
            compare(None, w, [("F1", Formation.circle(2.0))], episodes=1,
                    seed=0, controller_factory=plan_following_controller)

    def test_default_v_max(self):
        w = self.world_config()
        assert default_v_max(w) == w.max_action / w.dt
        wi = self.world_config(dynamics="single_integrator")
        assert default_v_max(wi) == wi.max_action

    def test_report_csv(self, tmp_path):
        report = ComparisonReport([CompareRow("F1", 5, 1.2, 1.5, 0.3, 1.0)])
        path = tmp_path / "cmp.csv"
        report.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "formation,n_robots,capt_time_s,gpg_time_s,gap_s,gpg_coverage"
        assert lines[1] == "F1,5,1.2,1.5,0.3,1.0"

    def test_policy_route_runs(self):
        from gpgswarm.gcn import init_params, LayerSpec
        from gpgswarm.graphs import GraphSpec
        from gpgswarm.world import feature_width
        w = self.world_config(max_steps=10)
        specs = (LayerSpec(feature_width(w), 4, 1, "tanh"),
                 LayerSpec(4, 2, 1, "identity"))
        params = init_params(specs, 0)
        report = compare(params, w, [("F1", Formation.circle(2.0))],
                         episodes=2, seed=0, graph=GraphSpec(k=1))
        row = report.rows[0]
        assert row.n_robots == 3
        assert math.isfinite(row.capt_time_s)
