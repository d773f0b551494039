import json

import numpy as np
import pytest

from polargrad.envs import (
    AssumptionError,
    DifferentialGame,
    MatrixGame,
    TabularMDP,
    bellman_residual,
    enumerate_joint_actions,
    joint_action_index,
    load_game,
    matrix_game_from_dict,
    optimal_joint_action,
    qtran_matrix_game,
    step,
    tabular_mdp_from_dict,
    value_iteration,
)
from conftest import stochastic_mdp


class TestMatrixGame:
    def test_benchmark_payoffs(self, matrix_game):
        assert matrix_game.reward((0, 0)) == 15.0
        assert matrix_game.reward((1, 2)) == 10.0
        assert matrix_game.reward((0, 1)) == -12.0
        assert matrix_game.reward((2, 0)) == -12.0

    def test_step_is_one_shot(self, matrix_game):
        r, s2, done = step(matrix_game, 0, (0, 0), None)
        assert (r, s2, done) == (15.0, 0, True)

    def test_invalid_action_rejected(self, matrix_game):
        with pytest.raises(ValueError):
            matrix_game.reward((0, 3))
        with pytest.raises(ValueError):
            matrix_game.reward((0,))

    def test_payoff_must_match_shape(self):
        with pytest.raises(ValueError):
            MatrixGame(n=2, action_count=3, payoff=np.zeros(8))


class TestDifferentialGame:
    def test_named_optima(self, mtq_game):
        assert mtq_game.reward((5.0, 5.0)) == pytest.approx(5.0, abs=1e-12)
        assert mtq_game.reward((-5.0, -5.0)) == pytest.approx(0.0, abs=1e-12)

    def test_origin_value(self, mtq_game):
        # f1 = 0.8*(-1 - 1) = -1.6 dominates f2 = -45 at the origin.
        assert mtq_game.reward((0.0, 0.0)) == pytest.approx(-1.6, abs=1e-12)

    def test_surface_matches_independent_evaluation(self, mtq_game):
        rng = np.random.default_rng(0)
        for _ in range(10_000):
            u1, u2 = rng.uniform(-10, 10, 2)
            f1 = 0.8 * (-(((u1 + 5) / 5) ** 2) - ((u2 + 5) / 5) ** 2)
            f2 = -((u1 - 5) ** 2) - (u2 - 5) ** 2 + 5
            assert mtq_game.reward((u1, u2)) == pytest.approx(max(f1, f2), abs=1e-9)

    def test_out_of_bounds_rejected(self, mtq_game):
        with pytest.raises(ValueError):
            mtq_game.reward((11.0, 0.0))

    def test_clamp(self, mtq_game):
        assert mtq_game.clamp((42.0, -42.0)) == pytest.approx([10.0, -10.0])


class TestEnumeration:
    def test_matrix_count_and_order(self, matrix_game):
        joints = enumerate_joint_actions(matrix_game)
        assert len(joints) == 9
        assert tuple(joints[0]) == (0, 0)
        assert tuple(joints[-1]) == (2, 2)
        assert len({tuple(j) for j in joints}) == 9

    def test_single_agent(self):
        g = MatrixGame(n=1, action_count=2, payoff=np.array([1.0, 0.0]))
        assert len(enumerate_joint_actions(g)) == 2

    def test_three_agents(self):
        mdp = stochastic_mdp(n=3, actions=2)
        joints = enumerate_joint_actions(mdp)
        assert len(joints) == 8
        assert [joint_action_index(mdp, j) for j in joints] == list(range(8))

    def test_continuous_unsupported(self, mtq_game):
        with pytest.raises(TypeError):
            enumerate_joint_actions(mtq_game)

    def test_joint_action_accessors(self, matrix_game):
        j = enumerate_joint_actions(matrix_game)[5]
        assert tuple(j) == (1, 2)
        assert j.agent(0) == 1
        assert j.others(0) == (2,)


class TestOptimalJointAction:
    def test_matrix_optimum(self, matrix_game):
        best, value = optimal_joint_action(matrix_game)
        assert tuple(best) == (0, 0)
        assert value == 15.0

    def test_tie_raises(self):
        g = MatrixGame(n=2, action_count=2, payoff=np.ones((2, 2)))
        with pytest.raises(AssumptionError):
            optimal_joint_action(g)

    def test_mdp_optimum_matches_value_iteration(self, two_state_mdp):
        q = value_iteration(two_state_mdp, tol=1e-12)
        assert bellman_residual(two_state_mdp, q) < 1e-10
        best, value = optimal_joint_action(two_state_mdp, state=0)
        assert value == pytest.approx(q[0].max())
        assert joint_action_index(two_state_mdp, best) == int(np.argmax(q[0]))


class TestValueIteration:
    def test_bellman_residual_everywhere(self, chain_mdp):
        q = value_iteration(chain_mdp, tol=1e-12)
        assert bellman_residual(chain_mdp, q) < 1e-8

    def test_hand_checkable_single_state(self):
        # One state, one agent, two actions: q(a) = r(a) + gamma * max_a q.
        mdp = TabularMDP(n=1, state_count=1, action_count=2, gamma=0.5,
                         transition=np.ones((1, 2, 1)), reward=np.array([[1.0, 0.0]]))
        q = value_iteration(mdp)
        # v = 1 + 0.5 v => v = 2; q = [2, 1]
        assert q[0] == pytest.approx([2.0, 1.0], abs=1e-9)


class TestTabularMDP:
    def test_row_sum_validation(self):
        P = np.ones((1, 2, 2)) * 0.4
        with pytest.raises(ValueError):
            TabularMDP(n=1, state_count=1, action_count=2, gamma=0.9,
                       transition=P, reward=np.zeros((1, 2)))

    def test_gamma_validation(self):
        with pytest.raises(ValueError):
            TabularMDP(n=1, state_count=1, action_count=1, gamma=1.0,
                       transition=np.ones((1, 1, 1)), reward=np.zeros((1, 1)))

    def test_sampled_transition_frequencies(self, two_state_mdp):
        rng = np.random.default_rng(0)
        n_draws = 100_000
        counts = np.zeros(two_state_mdp.state_count)
        for _ in range(n_draws):
            _, s2, _ = step(two_state_mdp, 0, (0, 1), rng)
            counts[s2] += 1
        a = joint_action_index(two_state_mdp, (0, 1))
        p = two_state_mdp.transition[0, a]
        se = np.sqrt(p * (1 - p) / n_draws)
        assert np.all(np.abs(counts / n_draws - p) <= 3 * se + 1e-12)

    def test_step_rewards_and_termination_flag(self, chain_mdp):
        rng = np.random.default_rng(1)
        r, s2, done = step(chain_mdp, 0, (1, 0), rng)
        a = joint_action_index(chain_mdp, (1, 0))
        assert r == chain_mdp.reward[0, a]
        assert not done
        assert s2 == int(np.argmax(chain_mdp.transition[0, a]))


class TestSerialization:
    def test_matrix_round_trip(self, matrix_game):
        doc = {"n": 2, "actions": 3, "payoff": matrix_game.payoff.reshape(-1).tolist()}
        g = matrix_game_from_dict(doc)
        assert np.array_equal(g.payoff, matrix_game.payoff)

    def test_tabular_round_trip(self, two_state_mdp):
        doc = {
            "n": two_state_mdp.n,
            "states": two_state_mdp.state_count,
            "actions": two_state_mdp.action_count,
            "gamma": two_state_mdp.gamma,
            "initial_state": 0,
            "horizon": 20,
            "transition": two_state_mdp.transition.tolist(),
            "reward": two_state_mdp.reward.tolist(),
        }
        mdp = tabular_mdp_from_dict(doc)
        assert np.allclose(mdp.transition, two_state_mdp.transition)
        assert np.allclose(mdp.reward, two_state_mdp.reward)

    def test_load_game_dispatch(self, tmp_path, matrix_game):
        path = tmp_path / "game.json"
        path.write_text(json.dumps(
            {"n": 2, "actions": 3, "payoff": matrix_game.payoff.reshape(-1).tolist()}
        ))
        g = load_game(str(path))
        assert isinstance(g, MatrixGame)
        assert g.reward((0, 0)) == 15.0

    def test_load_game_rejects_junk(self, tmp_path):
        path = tmp_path / "junk.json"
        path.write_text("{}")
        with pytest.raises(ValueError):
            load_game(str(path))
