import numpy as np
import pytest

from oracles import brute_force, mixing_by_powers, stationary_eig, tv_at
from pilearn.exact import (
    BudgetExceeded, GroundTruth, NonErgodicError, average_reward, bellman_residual,
    check_ergodic, compute_tau_tmix, dual_feasibility_residual, enumerate_policies,
    gap_identity_check, mixing_time, policy_iteration, read_truth, solve_optimal,
    stationary_distribution, truth_path, write_truth,
)
from pilearn.mdp import (
    MdpModel, ModelError, deterministic_policy, generate_random_ergodic, induced_chain,
    two_state_chain, two_state_switch, uniform_policy,
)

CHAIN = np.array([[0.9, 0.1], [0.2, 0.8]])


def test_stationary_examples():
    np.testing.assert_allclose(stationary_distribution(np.full((3, 3), 1 / 3)), [1 / 3] * 3)
    np.testing.assert_allclose(stationary_distribution(CHAIN), [2 / 3, 1 / 3], atol=1e-15)
    np.testing.assert_array_equal(stationary_distribution(np.ones((1, 1))), [1.0])


def test_stationary_fixed_point_on_random_chains():
    rng = np.random.default_rng(0)
    for _ in range(20):
        P = rng.dirichlet(np.ones(5), size=5)
        nu = stationary_distribution(P)
        assert np.abs(P.T @ nu - nu).max() <= 1e-11
        np.testing.assert_allclose(nu, stationary_eig(P), atol=1e-12)


def test_reducible_chain_has_witness():
    P = np.array([[1.0, 0.0], [0.5, 0.5]])
    with pytest.raises(NonErgodicError) as info:
        check_ergodic(P)
    assert info.value.kind == "reducible"
    i, j = info.value.witness
    assert np.linalg.matrix_power(P + np.eye(2), 4)[i, j] == 0


def test_periodic_chain_detected():
    with pytest.raises(NonErgodicError) as info:
        mixing_time(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert info.value.kind == "periodic"
    # a 3-cycle reaches every state but only at multiples of its period
    cyc = np.roll(np.eye(3), 1, axis=1)
    with pytest.raises(NonErgodicError):
        check_ergodic(cyc)


def test_average_reward_examples():
    m = two_state_chain()
    assert abs(average_reward(m, uniform_policy(2, 1)) - 2 / 3) <= 1e-12
    rng = np.random.default_rng(1)
    base = generate_random_ergodic(3, 2, 0.2, seed=2)
    const = MdpModel(base.transition, np.full(base.reward.shape, 0.37))
    pi = rng.dirichlet(np.ones(2), size=3)
    assert abs(average_reward(const, pi) - 0.37) <= 1e-12
    single = MdpModel(np.ones((2, 1, 1)), np.array([[[0.2]], [[0.6]]]))
    assert abs(average_reward(single, [[0.5, 0.5]]) - 0.4) <= 1e-15


def test_mixing_time_examples():
    assert mixing_time(np.full((4, 4), 0.25)) == 1
    t = mixing_time(CHAIN)
    nu = np.array([2 / 3, 1 / 3])
    assert tv_at(CHAIN, nu, t) <= 0.25
    assert t == 1 or tv_at(CHAIN, nu, t - 1) > 0.25
    assert t == 3


def test_switch_instance_ground_truth():
    truth = solve_optimal(two_state_switch(0.5))
    np.testing.assert_array_equal(truth.pi_star, [[0, 1], [0, 1]])
    assert abs(truth.v_star - 1.0) <= 1e-12
    assert truth.tau == pytest.approx(4.0)
    assert truth.t_mix == 1


def test_unsmoothed_switch_instance_is_not_ergodic():
    with pytest.raises(NonErgodicError, match="deterministic policy"):
        solve_optimal(two_state_switch(0.0))


def test_single_action_and_zero_reward():
    m = two_state_chain()
    truth = solve_optimal(m)
    assert abs(truth.v_star - 2 / 3) <= 1e-12
    assert all(ok for _, _, ok in truth.invariant_report(m))
    lhs, rhs = gap_identity_check(m, uniform_policy(2, 1), truth)
    assert abs(lhs) <= 1e-12 and abs(rhs) <= 1e-12

    base = generate_random_ergodic(4, 2, 0.2, seed=3)
    zero = MdpModel(base.transition, np.zeros(base.reward.shape))
    truth = solve_optimal(zero)
    assert truth.v_star == 0.0
    np.testing.assert_allclose(truth.h_star, 0.0, atol=1e-15)


def test_tau_uniform_rows():
    m = generate_random_ergodic(3, 2, 1.0, seed=0)
    tau, tmix = compute_tau_tmix(m)
    assert tau == pytest.approx(1.0) and tmix == 1


def test_tau_tmix_match_brute_force():
    for seed in range(5):
        m = generate_random_ergodic(2, 2, 0.2, seed=seed)
        best, tau, tmix = brute_force(m)
        got_tau, got_tmix = compute_tau_tmix(m)
        assert got_tau == pytest.approx(tau, rel=1e-10)
        assert got_tmix == tmix
        assert solve_optimal(m).v_star == pytest.approx(best, abs=1e-12)


def test_enumeration_order_and_budget():
    m = generate_random_ergodic(3, 2, 0.2, seed=0)
    sweep = enumerate_policies(m)
    assert sweep.actions.tolist()[:3] == [[0, 0, 0], [0, 0, 1], [0, 1, 0]]
    with pytest.raises(BudgetExceeded):
        enumerate_policies(m, budget=7)


def test_policy_iteration_agrees_with_enumeration():
    for seed in range(10):
        m = generate_random_ergodic(5, 3, 0.2, seed=seed)
        a = solve_optimal(m, method="enumerate")
        b = solve_optimal(m, method="policy_iteration")
        assert abs(a.v_star - b.v_star) <= 1e-10
        assert b.tau is None and b.t_mix is None


def test_policy_iteration_fallback_when_over_budget():
    m = generate_random_ergodic(4, 3, 0.2, seed=1)
    truth = solve_optimal(m, enumeration_budget=10)
    assert truth.tau is None
    assert abs(truth.v_star - solve_optimal(m).v_star) <= 1e-10
    assert bellman_residual(m, truth.v_star, truth.h_star) <= 1e-9


def test_dual_feasibility_examples():
    m = generate_random_ergodic(3, 2, 0.2, seed=5)
    rng = np.random.default_rng(0)
    pi = rng.dirichlet(np.ones(2), size=3)
    nu = stationary_distribution(induced_chain(m, pi))
    assert dual_feasibility_residual(m, nu[:, None] * pi) <= 1e-9
    always_move = MdpModel(np.array([[[0.0, 1.0], [1.0, 0.0]]]), np.zeros((1, 2, 2)))
    assert dual_feasibility_residual(always_move, [[1.0], [0.0]]) == 1.0
    with pytest.raises(ModelError):
        dual_feasibility_residual(m, np.full((3, 2), 0.2))
    with pytest.raises(ModelError):
        dual_feasibility_residual(m, [[1.5, 0], [-0.5, 0], [0, 0]])


def test_gap_identity_uniform_and_optimal():
    m = two_state_switch(0.5)
    truth = solve_optimal(m)
    lhs, rhs = gap_identity_check(m, uniform_policy(2, 2), truth)
    # uniform policy: v = 1/2, independent check of the left side
    assert lhs == pytest.approx(0.5, abs=1e-12)
    assert abs(lhs - rhs) <= 1e-9
    lhs, rhs = gap_identity_check(m, truth.pi_star, truth)
    assert abs(lhs) <= 1e-9 and abs(rhs) <= 1e-9


def test_invariant_report_flags_corruption():
    m = generate_random_ergodic(3, 2, 0.2, seed=8)
    truth = solve_optimal(m)
    assert all(ok for _, _, ok in truth.invariant_report(m))
    bad = GroundTruth(truth.v_star + 0.01, truth.h_star, truth.mu_star, truth.pi_star,
                      truth.nu_star, truth.tau, truth.t_mix)
    failed = [name for name, _, ok in bad.invariant_report(m) if not ok]
    assert "bellman_residual" in failed


def test_truth_sidecar_round_trip(tmp_path):
    m = generate_random_ergodic(3, 2, 0.2, seed=4)
    truth = solve_optimal(m)
    inst = tmp_path / "m.amdp"
    path = truth_path(inst)
    assert path.name == "m.amdp.truth"
    write_truth(truth, path)
    back = read_truth(path)
    assert back.v_star == truth.v_star and back.tau == truth.tau and back.t_mix == truth.t_mix
    np.testing.assert_array_equal(back.h_star, truth.h_star)
    np.testing.assert_array_equal(back.mu_star, truth.mu_star)


def test_mixing_time_matches_power_oracle():
    rng = np.random.default_rng(3)
    for _ in range(10):
        P = rng.dirichlet(np.full(4, 0.5), size=4)
        nu = stationary_distribution(P)
        assert mixing_time(P) == mixing_by_powers(P, nu)


def test_deterministic_policy_values_independent():
    m = generate_random_ergodic(3, 2, 0.2, seed=9)
    sweep = enumerate_policies(m, with_mixing=False)
    for actions, gain in zip(sweep.actions, sweep.gains):
        assert gain == pytest.approx(average_reward(m, deterministic_policy(actions, 2)), abs=1e-12)
