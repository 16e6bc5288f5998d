import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ranloop import appreg, hrlgen, netsim as ns
from ranloop.tabular import QTable, q_learning, enumerate_optimal_policy


class TestIntrinsicReward:
    def test_no_penalty(self):
        assert hrlgen.intrinsic_reward(10.0) == 10.0

    def test_penalized(self):
        assert hrlgen.intrinsic_reward(10.0, gamma_qs=3, penalty=2.0) == 4.0

    def test_zero(self):
        assert hrlgen.intrinsic_reward(0.0, gamma_qs=0) == 0.0

    def test_preconditions(self):
        with pytest.raises(ValueError):
            hrlgen.intrinsic_reward(1.0, gamma_qs=-1)
        with pytest.raises(ValueError):
            hrlgen.intrinsic_reward(1.0, penalty=-0.5)


class TestGoal:
    def test_unknown_metric(self):
        with pytest.raises(hrlgen.GoalError):
            hrlgen.Goal("jitter", 1.0, "decrease")

    def test_nonfinite_target(self):
        with pytest.raises(hrlgen.GoalError):
            hrlgen.Goal("throughput", float("inf"), "increase")

    def test_direction_must_match_metric(self):
        with pytest.raises(hrlgen.GoalError):
            hrlgen.Goal("throughput", 100.0, "decrease")
        with pytest.raises(hrlgen.GoalError):
            hrlgen.Goal("delay", 1.0, "increase")
        hrlgen.Goal("power", 150.0, "decrease")

    def test_percent_intent_scales_current_value(self):
        g = hrlgen.goal_from_intent(
            {"metric": "throughput", "direction": "increase", "percent": 10},
            current_value=200.0)
        assert g.target == pytest.approx(220.0)

    def test_decrease_percent(self):
        g = hrlgen.goal_from_intent(
            {"metric": "delay", "direction": "decrease", "percent": 50},
            current_value=2.0)
        assert g.target == pytest.approx(1.0)

    def test_absolute_target(self):
        g = hrlgen.goal_from_intent(
            {"metric": "delay", "direction": "decrease", "target": 1.0}, 7.0)
        assert g.target == 1.0

    def test_quantized_to_five_percent_steps(self):
        g = hrlgen.Goal("throughput", 220.0, "increase")
        assert hrlgen.quantize_goal(g, current_value=200.0) == ("throughput", 22)

    def test_goal_vector_one_hot(self):
        g = hrlgen.Goal("throughput", 220.0, "increase")
        want = [220.0] + [0.0] * (len(hrlgen.GOAL_METRICS) - 1)
        assert hrlgen.goal_vector(g).tolist() == want

    def test_achieved_is_one_when_met_exactly(self):
        assert hrlgen.Goal("throughput", 100.0, "increase").achieved(100.0) == 1.0
        assert hrlgen.Goal("delay", 2.0, "decrease").achieved(2.0) == 1.0


class TestHrlState:
    def test_exactly_four_elements(self):
        s = hrlgen.HrlState(p_c=150.0, t_class={c: 1 for c in ns.CLASSES},
                            t_l=80.0, p_l=0.5)
        assert set(s.to_json_dict()) == {"p_c", "t_class", "t_l", "p_l"}

    def test_discretize_stable(self):
        s = hrlgen.HrlState(p_c=150.0, t_class={"video": 3, "voice": 1,
                                                "gaming": 0, "urllc": 0},
                            t_l=80.0, p_l=0.5)
        assert s.discretize() == s.discretize() == (7, "video", 1, 0)


class TestSubsets:
    def test_count_excludes_conflicting_pairs(self):
        subsets = hrlgen.conflict_free_subsets()
        assert len(subsets) == 24          # 2^5 minus the 8 with the bad pair
        assert () in subsets
        reg = appreg.default_registry()
        for s in subsets:
            assert reg.conflict_check(s) is None

    def test_sorted_and_unique(self):
        subsets = hrlgen.conflict_free_subsets()
        assert len(set(subsets)) == len(subsets)
        assert all(tuple(sorted(s)) == s for s in subsets)


def tiny_cfg():
    return ns.ScenarioConfig(n_small=4, n_ues=8, load_scale=0.5,
                             drift_window_ttis=20)


INTENTS = [{"metric": "throughput", "direction": "increase", "percent": 10}]


def tiny_collect(tmp_path, name, seed=3):
    out = tmp_path / name
    cc = hrlgen.CollectConfig(episodes=1, decisions_per_episode=12,
                              interval_ttis=5, tau=10)
    stats = hrlgen.collect(tiny_cfg(), INTENTS, out, seed=seed, collect_cfg=cc)
    return out, stats


class TestCollect:
    def test_empty_intent_list_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            hrlgen.collect(tiny_cfg(), [], tmp_path / "x.jsonl", seed=0)

    def test_dataset_schema_and_monotone_time(self, tmp_path):
        out, stats = tiny_collect(tmp_path, "d.jsonl")
        rows = hrlgen.read_dataset(out)
        assert len(rows) == stats["records"] == 12
        reg = appreg.default_registry()
        times = [r["t"] for r in rows]
        assert times == sorted(times) and len(set(times)) == len(times)
        for r in rows:
            assert set(r) == {"t", "s", "g", "a", "r_in"}
            assert set(r["s"]) == {"p_c", "t_class", "t_l", "p_l"}
            assert reg.conflict_check([a["app_id"] for a in r["a"]]) is None

    def test_goal_constant_and_derived_from_intent(self, tmp_path):
        out, _ = tiny_collect(tmp_path, "d.jsonl")
        rows = hrlgen.read_dataset(out)
        goals = {json.dumps(r["g"], sort_keys=True) for r in rows}
        assert len(goals) == 1
        g = rows[0]["g"]
        assert g["metric"] == "throughput" and g["target"] > 0

    def test_extrinsic_is_tau_window_sum(self, tmp_path):
        out, stats = tiny_collect(tmp_path, "d.jsonl")
        rows = hrlgen.read_dataset(out)
        assert stats["extrinsic_rewards"][0] == pytest.approx(
            sum(r["r_in"] for r in rows[:10]))

    def test_same_seed_identical_file(self, tmp_path):
        a, _ = tiny_collect(tmp_path, "a.jsonl", seed=42)
        b, _ = tiny_collect(tmp_path, "b.jsonl", seed=42)
        assert a.read_bytes() == b.read_bytes()


class TestToyHierarchy:
    def test_tabular_learner_converges_to_enumerated_optimum(self):
        # 2 apps -> 4 subset actions; 3 network-load states cycling upward
        # unless the right subset is on. Rewards favour using app 0 in state
        # 1, app 1 in state 2, nothing in state 0.
        n_states, n_actions = 3, 4
        rewards = [[1.0, 0.0, 0.0, -0.5],
                   [-1.0, 2.0, -1.0, 0.5],
                   [-2.0, -1.0, 3.0, 1.0]]
        transitions = [[min(s + (0 if a == s else 1), n_states - 1)
                        for a in range(n_actions)] for s in range(n_states)]
        oracle, _ = enumerate_optimal_policy(transitions, rewards, gamma=0.9)

        class Env:
            def reset(self, seed):
                self.s = seed % n_states
                return self.s

            def step(self, a):
                r = rewards[self.s][a]
                self.s = transitions[self.s][a]
                return self.s, r, False

        table = QTable(n_actions)
        final_update = q_learning(Env(), table, episodes=500, seed=1,
                                  lr=0.5, gamma=0.9, max_steps=30)
        assert final_update < 1e-3
        assert [table.best(s) for s in range(n_states)] == oracle


class TestFeudal:
    def test_zero_goal_gives_uniform_policy(self):
        net = hrlgen.FeudalNet(obs_dim=7, goal_dim=4, n_actions=6, seed=0)
        pi = net.policy(np.zeros(4))
        assert np.allclose(pi, 1.0 / 6)

    def test_aligned_displacement_gives_unit_intrinsic(self):
        g = np.array([1.0, 0.0, 0.0])
        states = [np.zeros(3), np.array([2.0, 0, 0]), np.array([5.0, 0, 0])]
        goals = [g, g]
        assert hrlgen.worker_intrinsic(states, goals, c=2) == pytest.approx(1.0)

    def test_bad_horizon_rejected(self):
        with pytest.raises(ValueError):
            hrlgen.worker_intrinsic([np.zeros(2)], [], c=0)
        with pytest.raises(ValueError):
            hrlgen.FeudalNet(obs_dim=3, goal_dim=2, n_actions=2, horizon=0)

    @given(st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_intrinsic_bounded(self, seed):
        rng = np.random.default_rng(seed)
        c = int(rng.integers(1, 5))
        states = [rng.normal(size=4) for _ in range(c + 1)]
        goals = [rng.normal(size=4) for _ in range(c)]
        r = hrlgen.worker_intrinsic(states, goals, c)
        assert -1.0 - 1e-12 <= r <= 1.0 + 1e-12

    def test_manager_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        net = hrlgen.FeudalNet(obs_dim=5, goal_dim=3, n_actions=4, seed=11)
        z = rng.normal(size=net.w_manager.shape[1])
        disp = rng.normal(size=3)
        adv = 1.7
        grad = hrlgen.manager_gradient(net, z, disp, adv)

        def objective(w):
            return adv * hrlgen.cosine(disp, w @ z)

        eps = 1e-6
        for i in range(net.w_manager.shape[0]):
            for j in range(net.w_manager.shape[1]):
                w_hi, w_lo = net.w_manager.copy(), net.w_manager.copy()
                w_hi[i, j] += eps
                w_lo[i, j] -= eps
                fd = (objective(w_hi) - objective(w_lo)) / (2 * eps)
                assert grad[i, j] == pytest.approx(fd, rel=1e-4, abs=1e-9)

    def test_training_runs_and_updates_policy(self):
        env = hrlgen.DecisionEnv(tiny_cfg(), seed=2, interval_ttis=5)
        goal = hrlgen.Goal("throughput", 100.0, "increase")
        init = hrlgen.FeudalNet(obs_dim=7, goal_dim=len(hrlgen.GOAL_METRICS),
                                n_actions=len(env.subsets), seed=2)
        before = init.u_actions.copy()
        net = hrlgen.train_feudal(env, goal, decisions=15, seed=2, net=init)
        assert np.isfinite(net.u_actions).all()
        assert not np.allclose(net.u_actions, before)
