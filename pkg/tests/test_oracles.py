import json

import numpy as np
import pytest

from perturbench.autodiff import Mlp
from perturbench.oracles import (
    DiscretePolicy,
    TabularSAAMG,
    finite_diff_gradient,
    heuristic_single_step_value,
    maad,
    maad_gaussian,
    optimal_adversary_value,
    policy_value,
    policy_value_iterative,
    q_consistent,
    random_policy,
    random_saamg,
    theorem1_check,
    theorem1_suite,
    theorem2_check,
    theorem2_suite,
)


class TestFiniteDiff:
    def test_square_at_three(self):
        g = finite_diff_gradient(lambda x: float(x[0] ** 2), np.array([3.0]))
        assert abs(g[0] - 6.0) < 1e-6

    def test_constant_function(self):
        g = finite_diff_gradient(lambda x: 5.0, np.ones(4))
        assert np.array_equal(g, np.zeros(4))

    def test_matches_backward_on_random_scalar_head(self):
        rng = np.random.default_rng(0)
        net = Mlp.init([3, 8, 1], "tanh", "identity", rng)
        x = rng.normal(size=3)
        from perturbench.autodiff import Tape, backward, mlp_forward

        tape = Tape()
        mlp_forward(net, x, tape)
        _, input_grad = backward(tape, np.ones(1))
        fd = finite_diff_gradient(lambda z: float(net.forward(z)[0]), x.copy())
        assert np.allclose(input_grad, fd, rtol=1e-4, atol=1e-7)


def single_state_game(r=1.0, gamma=0.5):
    return TabularSAAMG(
        n_agents=1,
        n_actions=[1],
        transitions=np.ones((1, 1, 1)),
        rewards=np.full((1, 1), r),
        gamma=gamma,
        state_menu=[[0]],
        action_menu=[[None]],
    )


def trap_game(gamma=0.5, with_override=True):
    """State 0 loops under action 0; action 1 enters the absorbing state 1
    where every step collects -1."""
    transitions = np.zeros((2, 2, 2))
    transitions[0, 0, 0] = 1.0
    transitions[0, 1, 1] = 1.0
    transitions[1, :, 1] = 1.0
    rewards = np.array([[0.0, -1.0], [-1.0, -1.0]])
    return TabularSAAMG(
        n_agents=1,
        n_actions=[2],
        transitions=transitions,
        rewards=rewards,
        gamma=gamma,
        state_menu=[[0], [1]],
        action_menu=[[None, 1] if with_override else [None]],
    )


def stay_policy():
    return DiscretePolicy([np.array([[1.0, 0.0], [1.0, 0.0]])])


class TestGameValidation:
    def test_rows_must_sum_to_one(self):
        with pytest.raises(ValueError):
            TabularSAAMG(1, [1], np.full((1, 1, 1), 0.5), np.zeros((1, 1)), 0.9,
                         [[0]], [[None]])

    def test_identity_required_in_state_menu(self):
        with pytest.raises(ValueError):
            TabularSAAMG(1, [1], np.ones((2, 1, 1)) * np.array([[[1, 0]], [[0, 1]]]),
                         np.zeros((2, 1)), 0.9, [[1], [1]], [[None]])

    def test_identity_required_in_action_menu(self):
        with pytest.raises(ValueError):
            single = single_state_game()
            TabularSAAMG(1, [1], single.transitions, single.rewards, 0.5,
                         [[0]], [[0]])

    def test_json_roundtrip(self):
        game = random_saamg(np.random.default_rng(0))
        clone = TabularSAAMG.from_json(json.loads(json.dumps(game.to_json())))
        assert np.array_equal(clone.transitions, game.transitions)
        assert np.array_equal(clone.rewards, game.rewards)
        assert clone.state_menu == game.state_menu
        assert clone.action_menu == game.action_menu


class TestPolicyValue:
    def test_zero_rewards_zero_value(self):
        game = single_state_game(r=0.0)
        policy = DiscretePolicy([np.ones((1, 1))])
        assert np.allclose(policy_value(game, policy), 0.0)

    def test_absorbing_geometric_series(self):
        game = single_state_game(r=1.0, gamma=0.5)
        policy = DiscretePolicy([np.ones((1, 1))])
        assert policy_value(game, policy)[0] == pytest.approx(2.0)

    def test_linear_solve_matches_iteration(self):
        rng = np.random.default_rng(1)
        game = random_saamg(rng, n_states=3)
        policy = random_policy(rng, game)
        v1 = policy_value(game, policy)
        v2 = policy_value_iterative(game, policy, tol=1e-12)
        assert np.max(np.abs(v1 - v2)) < 1e-9


class TestOptimalAdversary:
    def test_identity_menus_recover_clean_value(self):
        rng = np.random.default_rng(2)
        game = random_saamg(rng, with_action_menus=False)
        game.state_menu = [[s] for s in range(game.n_states)]
        policy = random_policy(rng, game)
        assert np.allclose(optimal_adversary_value(game, policy),
                           policy_value(game, policy), atol=1e-9)

    def test_override_into_trap(self):
        game = trap_game(gamma=0.5)
        v_star = optimal_adversary_value(game, stay_policy())
        assert v_star[0] == pytest.approx(-2.0)  # -1 / (1 - 0.5)
        assert v_star[1] == pytest.approx(-2.0)

    def test_statewise_below_clean_value(self):
        for k in range(10):
            rng = np.random.default_rng(np.random.SeedSequence([3, k]))
            game = random_saamg(rng)
            policy = random_policy(rng, game)
            v_star = optimal_adversary_value(game, policy)
            v_pi = policy_value(game, policy)
            assert np.all(v_star <= v_pi + 1e-9)


class TestHeuristicValue:
    def test_greedy_under_optimal_q_is_optimal(self):
        for k in range(10):
            rng = np.random.default_rng(np.random.SeedSequence([4, k]))
            game = random_saamg(rng)
            policy = random_policy(rng, game)
            v_star = optimal_adversary_value(game, policy)
            q_star = game.rewards + game.gamma * (game.transitions @ v_star)
            v_h, _ = heuristic_single_step_value(game, policy, q_star)
            assert np.max(np.abs(v_h - v_star)) < 1e-8

    def test_identity_menus_recover_clean_value(self):
        rng = np.random.default_rng(5)
        game = random_saamg(rng, with_action_menus=False)
        game.state_menu = [[s] for s in range(game.n_states)]
        policy = random_policy(rng, game)
        v_h, _ = heuristic_single_step_value(game, policy, q_consistent(game, policy))
        assert np.allclose(v_h, policy_value(game, policy), atol=1e-9)

    def test_sandwich_on_suite_instances(self):
        for k in range(20):
            rng = np.random.default_rng(np.random.SeedSequence([7, k]))
            game = random_saamg(rng)
            policy = random_policy(rng, game)
            noise = float(rng.uniform(0.05, 0.3))
            q = q_consistent(game, policy) + rng.uniform(-noise, noise, game.rewards.shape)
            v_pi = policy_value(game, policy)
            v_star = optimal_adversary_value(game, policy)
            v_h, _ = heuristic_single_step_value(game, policy, q)
            assert np.all(v_star <= v_h + 1e-9)
            assert np.all(v_h <= v_pi + 1e-9)


class TestTheorem1:
    def test_reports_all_quantities(self):
        rng = np.random.default_rng(6)
        game = random_saamg(rng, n_states=4)
        policy = random_policy(rng, game)
        q = q_consistent(game, policy)
        q[0, 0] += 0.1
        rec = theorem1_check(game, policy, q)
        assert set(rec) >= {"eps_Q", "gap", "bound", "holds"}
        assert rec["eps_Q"] == pytest.approx(0.1)
        assert rec["bound"] == pytest.approx(0.2 / (1 - game.gamma))

    def test_zero_eps_zero_gap_on_benign_instance(self):
        # greedy with the exact clean Q coincides with the optimal adversary
        # on most random instances; this pins one where it does
        rng = np.random.default_rng(np.random.SeedSequence([7, 0]))
        game = random_saamg(rng)
        policy = random_policy(rng, game)
        rec = theorem1_check(game, policy, q_consistent(game, policy))
        assert rec["eps_Q"] == 0.0
        assert rec["gap"] <= 1e-9
        assert rec["holds"]

    def test_zero_eps_counterexample_is_reproducible(self):
        # the bound as stated fails at eps_Q = 0 when the myopic greedy rule
        # misses a multi-step trap the optimal adversary exploits; the oracle
        # reports rather than hides this
        def build():
            rng = np.random.default_rng(np.random.SeedSequence([7, 7]))
            game = random_saamg(rng)
            policy = random_policy(rng, game)
            return theorem1_check(game, policy, q_consistent(game, policy))

        rec1, rec2 = build(), build()
        assert rec1["eps_Q"] == 0.0
        assert not rec1["holds"]
        assert rec1["gap"] > 0.1
        assert rec1 == rec2

    def test_small_gamma_single_step_argument(self):
        for k in range(20):
            rng = np.random.default_rng(np.random.SeedSequence([8, k]))
            game = random_saamg(rng, gamma=0.01)
            policy = random_policy(rng, game)
            noise = float(rng.uniform(0.1, 0.3))
            q = q_consistent(game, policy) + rng.uniform(-noise, noise,
                                                         game.rewards.shape)
            rec = theorem1_check(game, policy, q)
            assert rec["holds"]
            assert rec["bound"] == pytest.approx(2 * rec["eps_Q"] / 0.99)

    def test_suite_slice_holds_and_counterexamples_carry_games(self):
        records = theorem1_suite(20, seed=7)
        for rec in records:
            assert rec["holds"] or "counterexample" in rec


class TestMaad:
    def test_identical_states_zero(self):
        policy = DiscretePolicy([np.array([[0.3, 0.7], [0.5, 0.5]])])
        assert maad(policy, 0, 0) == 0.0

    def test_additivity_over_agents(self):
        # two agents, each contributing KL = 0.5 by construction
        p = np.array([0.8, 0.2])
        q = p.copy()
        # solve for q giving KL 0.5 via direct construction: use known pair
        table = np.stack([p, np.array([0.2, 0.8])])
        policy = DiscretePolicy([table, table])
        kl_single = maad(DiscretePolicy([table]), 0, 1)
        assert maad(policy, 0, 1) == pytest.approx(2 * kl_single)

    def test_support_mismatch_rejected(self):
        table = np.array([[0.5, 0.5], [1.0, 0.0]])
        policy = DiscretePolicy([table])
        with pytest.raises(ValueError):
            maad(policy, 0, 1)

    def test_asymmetry_possible(self):
        table = np.array([[0.9, 0.1], [0.5, 0.5]])
        policy = DiscretePolicy([table])
        assert maad(policy, 0, 1) != maad(policy, 1, 0)

    def test_gaussian_closed_form(self):
        # actors with constant output shift d per agent: MAAD = n d^2 / (2 sigma^2)
        d = 0.3
        sigma = 0.1
        nets = []
        for _ in range(3):
            net = Mlp([2, 2], [np.eye(2)], [np.zeros(2)])
            nets.append(net)
        obs_s = np.zeros((3, 2))
        obs_hat = np.full((3, 2), d / np.sqrt(2))
        got = maad_gaussian(nets, obs_s, obs_hat, sigma)
        assert got == pytest.approx(3 * d ** 2 / (2 * sigma ** 2))


class TestTheorem2:
    def test_identity_menu_trivially_holds(self):
        rng = np.random.default_rng(9)
        game = random_saamg(rng, with_action_menus=False)
        game.state_menu = [[s] for s in range(game.n_states)]
        policy = random_policy(rng, game)
        rec = theorem2_check(game, policy)
        assert rec["holds"]
        assert max(rec["lhs"]) <= 1e-9
        assert rec["rhs"] == 0.0

    def test_uniform_policy_forces_zero(self):
        rng = np.random.default_rng(10)
        game = random_saamg(rng, with_action_menus=False)
        policy = DiscretePolicy([
            np.full((game.n_states, k), 1.0 / k) for k in game.n_actions
        ])
        rec = theorem2_check(game, policy)
        assert rec["max_maad"] == pytest.approx(0.0)
        assert max(rec["lhs"]) <= 1e-9

    def test_suite_slice_all_hold(self):
        records = theorem2_suite(20, seed=11)
        assert all(r["holds"] for r in records)
