"""Brute-force oracles checked against hand results and each other."""
import numpy as np
import pytest

from gridguide.env import EnvState, GridConfig, TaskSpec, reset, step, task_success
from gridguide import oracles
from gridguide.oracles import (
    OracleGuardError,
    TabularMdp,
    bfs_oracle,
    build_task_mdp,
    enumerate_cores,
    enumerate_plan_values,
    greedy_episode_length,
    greedy_policy,
    random_walk_success_prob,
    random_walk_success_table,
    value_iteration,
)

from test_env import enumerate_core_states


CFG3 = GridConfig(width=3, height=3, n_blocks=1, horizon=40)
GRASP = TaskSpec("grasp")


class TestEnumerateCores:
    def test_matches_independent_enumeration(self):
        got = set(enumerate_cores(CFG3))
        want = {s.core() for s in enumerate_core_states(CFG3)}
        assert got == want
        assert len(got) == len(enumerate_cores(CFG3))  # no duplicates

    def test_count_small_grid(self):
        # 2x2, one block: 4 agent cells x (4 loose spots + 1 carried)
        cfg = GridConfig(width=2, height=2, n_blocks=1, horizon=10)
        assert len(enumerate_cores(cfg)) == 20

    def test_two_block_slot_order_distinct(self):
        cfg = GridConfig(width=2, height=2, n_blocks=2, horizon=10)
        cores = enumerate_cores(cfg)
        assert len(cores) == len(set(cores))
        # both slot assignments of a carried block appear
        carried_slots = {tuple(b[2] for b in c[3]) for c in cores if c[2]}
        assert carried_slots == {(True, False), (False, True)}

    def test_guard_refuses_large(self, monkeypatch):
        monkeypatch.setattr(oracles, "STATE_GUARD", 50)
        with pytest.raises(OracleGuardError):
            enumerate_cores(CFG3)


class TestBfs:
    def test_corner_to_corner_grasp(self):
        state = EnvState(0, 0, False, ((2, 2, False),), 0)
        assert bfs_oracle(state, GRASP, CFG3) == 5

    def test_on_block_single_toggle(self):
        state = EnvState(1, 1, False, ((1, 1, False),), 0)
        assert bfs_oracle(state, GRASP, CFG3) == 1

    def test_already_satisfied_place(self):
        task = TaskSpec("place", place_target=(2, 0))
        state = EnvState(0, 0, False, ((2, 0, False),), 0)
        assert bfs_oracle(state, task, CFG3) == 0

    def test_unreachable_returns_none(self):
        cfg = GridConfig(width=2, height=1, n_blocks=0, horizon=10)
        task = TaskSpec("place", place_target=(0, 0))
        assert bfs_oracle(EnvState(1, 0, False, (), 0), task, cfg) is None

    def test_guard_refuses_large(self, monkeypatch):
        monkeypatch.setattr(oracles, "STATE_GUARD", 5)
        state = EnvState(0, 0, False, ((2, 2, False),), 0)
        with pytest.raises(OracleGuardError):
            bfs_oracle(state, GRASP, CFG3)

    def test_lower_bounds_any_rollout(self):
        # random rollouts that reach success never beat the BFS length
        rng = np.random.default_rng(0)
        for _ in range(30):
            start = reset(CFG3, GRASP, rng)
            opt = bfs_oracle(start, GRASP, CFG3)
            s = start
            for steps in range(1, 41):
                s = step(s, int(rng.integers(6)), CFG3)
                if task_success(s, GRASP):
                    assert steps >= opt
                    break


class TestValueIteration:
    def test_self_loop_geometric_series(self):
        mdp = TabularMdp(states=[0], index={0: 0},
                         transitions=np.zeros((1, 1), dtype=int),
                         rewards=np.ones((1, 1)),
                         terminal=np.zeros(1, dtype=bool))
        v = value_iteration(mdp, gamma=0.5, tol=1e-12)
        assert v[0] == pytest.approx(2.0, abs=1e-9)

    def test_no_reward_all_zero(self):
        cfg = GridConfig(width=2, height=2, n_blocks=0, horizon=10)
        mdp = build_task_mdp(cfg, TaskSpec("grasp"))  # no blocks: grasp impossible
        v = value_iteration(mdp, gamma=0.9)
        assert np.all(v == 0.0)

    def test_gamma_validated(self):
        cfg = GridConfig(width=2, height=2, n_blocks=0, horizon=10)
        mdp = build_task_mdp(cfg, TaskSpec("grasp"))
        with pytest.raises(ValueError):
            value_iteration(mdp, gamma=1.0)

    def test_bellman_residual_everywhere(self):
        mdp = build_task_mdp(CFG3, GRASP)
        gamma, tol = 0.95, 1e-10
        v = value_iteration(mdp, gamma, tol)
        q = mdp.rewards + gamma * v[mdp.transitions]
        best = q.max(axis=1)
        best[mdp.terminal] = 0.0
        assert np.abs(best - v).max() < tol

    def test_greedy_matches_bfs_on_grasp(self):
        mdp = build_task_mdp(CFG3, GRASP)
        v = value_iteration(mdp, gamma=0.95)
        pol = greedy_policy(mdp, v, gamma=0.95)
        rng = np.random.default_rng(1)
        for _ in range(20):
            start = reset(CFG3, GRASP, rng)
            opt = bfs_oracle(start, GRASP, CFG3)
            got = greedy_episode_length(mdp, pol, start.core(), cap=4 * opt + 4)
            assert got == opt


class TestRandomWalk:
    def test_success_state_probability_one(self):
        cfg = GridConfig(width=2, height=2, n_blocks=1, horizon=10)
        mdp, h = random_walk_success_table(cfg, GRASP, horizon=5)
        for i, core in enumerate(mdp.states):
            if mdp.terminal[i]:
                assert h[i] == 1.0

    def test_monotone_in_horizon(self):
        cfg = GridConfig(width=2, height=2, n_blocks=1, horizon=10)
        _, h5 = random_walk_success_table(cfg, GRASP, horizon=5)
        _, h10 = random_walk_success_table(cfg, GRASP, horizon=10)
        assert np.all(h10 >= h5 - 1e-15)

    def test_single_step_hand_value(self):
        # agent on the block: only ToggleGripper succeeds in one step
        cfg = GridConfig(width=2, height=2, n_blocks=1, horizon=10)
        core = (0, 0, False, ((0, 0, False),))
        assert random_walk_success_prob(cfg, GRASP, core, horizon=1) == pytest.approx(1 / 6)

    def test_empirical_agreement(self):
        cfg = GridConfig(width=2, height=2, n_blocks=1, horizon=10)
        task = GRASP
        rng = np.random.default_rng(2)
        n = 4000
        start = EnvState(0, 0, False, ((1, 1, False),), 0)
        p = random_walk_success_prob(cfg, task, start.core(), horizon=10)
        wins = 0
        for _ in range(n):
            s = start
            for _ in range(10):
                s = step(s, int(rng.integers(6)), cfg)
                if task_success(s, task):
                    wins += 1
                    break
        sigma = np.sqrt(n * p * (1 - p))
        assert abs(wins - n * p) <= 4 * sigma

    def test_unknown_core_rejected(self):
        cfg = GridConfig(width=2, height=2, n_blocks=1, horizon=10)
        with pytest.raises(ValueError):
            random_walk_success_prob(cfg, GRASP, (5, 5, False, ((0, 0, False),)), horizon=3)


class TestPlanEnumeration:
    def test_depth_one_immediate_reward(self):
        from test_planner import ScriptedModel
        state = EnvState(2, 2, False, ((2, 2, False),), 0)
        vals = enumerate_plan_values(state, GRASP, ScriptedModel(), CFG3, depth=1, gamma=0.9)
        np.testing.assert_array_equal(vals, [0.0, 0.0, 1.0, 0.0])

    def test_two_step_discounted(self):
        from test_planner import ScriptedModel
        state = EnvState(1, 2, False, ((2, 2, False),), 0)
        vals = enumerate_plan_values(state, GRASP, ScriptedModel(), CFG3, depth=2, gamma=0.9)
        assert vals[0] == pytest.approx(0.9)
        assert vals[1] == 0.0 and vals[2] == 0.0 and vals[3] == 0.0

    def test_values_scale_free(self):
        from test_planner import ScriptedModel
        state = EnvState(0, 0, False, ((2, 2, False),), 0)
        base = enumerate_plan_values(state, GRASP, ScriptedModel(), CFG3, depth=6, gamma=0.95)
        scaled = enumerate_plan_values(state, TaskSpec("grasp", reward_scale=7.0),
                                       ScriptedModel(), CFG3, depth=6, gamma=0.95)
        np.testing.assert_array_equal(base, scaled)
