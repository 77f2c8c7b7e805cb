import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfgqmi.core import (
    GREEDY,
    PolicyOperator,
    mfne_residual,
    policy_greedy,
    random_population,
    uniform_population,
)
from mfgqmi.envs import tabular_env
from mfgqmi.errors import ConfigError, ConvergenceError
from mfgqmi.fpi import (
    FpiConfig,
    _GammaMap,
    best_response,
    chain_period,
    fpi_solve,
    ground_truth_mfne,
    induced_population,
    stationary_power,
)
from oracles import optimal_q_by_enumeration, random_mask, random_mdp, stationary_by_solve


def congestion_env(rng, n=4, a=3, gamma=0.7, weight=2.0):
    """Random MDP whose reward is lowered by the population at the current state."""
    rewards, kernel, _, _ = random_mdp(rng, n, a)
    table = rewards.copy()
    return tabular_env(rewards, kernel, gamma, reward_fn=lambda m: table - weight * m[:, None],
                       reward_bound=1.0 + weight)


# ---------------------------------------------------------------- best response


def test_best_response_single_state():
    env = tabular_env([[1.0]], [[[1.0]]], 0.98)
    q = best_response([1.0], env, tol=1e-10)
    assert q[0, 0] == pytest.approx(50.0, abs=1e-8)


def test_best_response_two_actions_one_state():
    env = tabular_env([[0.0, 1.0]], [[[1.0], [1.0]]], 0.5)
    q = best_response([1.0], env, tol=1e-12)
    np.testing.assert_allclose(q, [[1.0, 2.0]], atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_best_response_matches_policy_enumeration(seed):
    rng = np.random.default_rng(seed)
    n, a = 3, int(rng.integers(2, 4))
    valid = random_mask(rng, n, a)
    rewards, kernel, gamma, _ = random_mdp(rng, n, a, valid=valid)
    env = tabular_env(rewards, kernel, gamma, valid)
    q = best_response(uniform_population(n), env, GREEDY, tol=1e-12)
    oracle = optimal_q_by_enumeration(rewards, env.kernel_tensor(), gamma, valid)
    assert np.max(np.abs(q - oracle)) <= 1e-8


def test_best_response_independent_of_start(rng):
    rewards, kernel, gamma, _ = random_mdp(rng, 5, 3)
    env = tabular_env(rewards, kernel, gamma)
    tol = 1e-10
    cold = best_response(uniform_population(5), env, tol=tol)
    warm = best_response(uniform_population(5), env, tol=tol, q0=rng.uniform(-3, 3, size=(5, 3)))
    bound = 2 * tol / (1 - gamma)  # a sweep change of tol leaves at most tol * gamma / (1 - gamma) to go
    assert np.max(np.abs(cold - warm)) <= bound


def test_best_response_reports_residual_on_non_convergence():
    env = tabular_env([[1.0]], [[[1.0]]], 0.99)
    with pytest.raises(ConvergenceError) as info:
        best_response([1.0], env, max_sweeps=5, tol=1e-12)
    assert info.value.residual == pytest.approx(0.99**4, rel=1e-12)


def test_best_response_fixed_sweeps_never_raises():
    env = tabular_env([[1.0]], [[[1.0]]], 0.99)
    q = best_response([1.0], env, max_sweeps=3, tol=0.0)
    assert q[0, 0] == pytest.approx(1 + 0.99 + 0.99**2)


def test_softmax_best_response_close_to_greedy(rng):
    for _ in range(10):
        rewards, kernel, gamma, _ = random_mdp(rng, 4, 3)
        env = tabular_env(rewards, kernel, gamma)
        L = 200.0
        greedy = best_response(uniform_population(4), env, GREEDY, tol=1e-12)
        soft = best_response(uniform_population(4), env, PolicyOperator("softmax", L), tol=1e-12)
        gap = np.max(np.abs(greedy - soft))
        assert gap <= 2 * math.log(3) / (L * (1 - gamma))


# ---------------------------------------------------------------- induced population


def test_induced_population_of_uniform_rows():
    kernel = np.full((2, 1, 2), 0.5)
    env = tabular_env(np.zeros((2, 1)), kernel, 0.5)
    pi = policy_greedy(np.zeros((2, 1)), env.valid)
    np.testing.assert_allclose(induced_population(pi, env), [0.5, 0.5])


def test_swap_chain_is_reported_as_periodic():
    kernel = np.array([[[0.0, 1.0]], [[1.0, 0.0]]])
    env = tabular_env(np.zeros((2, 1)), kernel, 0.5)
    pi = policy_greedy(np.zeros((2, 1)), env.valid)
    with pytest.raises(ConvergenceError, match="period 2") as info:
        induced_population(pi, env)
    assert info.value.diagnostic["period"] == 2


def test_chain_period_examples():
    cycle3 = np.roll(np.eye(3), 1, axis=1)
    assert chain_period(cycle3) == 3
    lazy = 0.5 * cycle3 + 0.5 * np.eye(3)
    assert chain_period(lazy) == 1
    # transient states feeding a closed 2-cycle
    p = np.array([[0.5, 0.5, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
    assert chain_period(p) == 2


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_induced_population_matches_linear_solve(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    kernel = rng.dirichlet(np.ones(n), size=n)
    mu = stationary_power(kernel, tol=1e-14)
    assert np.abs(mu - stationary_by_solve(kernel)).sum() <= 1e-8


def test_induced_population_independent_of_start(rng):
    kernel = rng.dirichlet(np.ones(5), size=5)
    a = stationary_power(kernel, tol=1e-14)
    b = stationary_power(kernel, tol=1e-14, start=random_population(5, rng))
    assert np.abs(a - b).sum() <= 1e-12


def test_stationary_power_gives_up_after_max_iters(rng):
    kernel = np.array([[1 - 1e-6, 1e-6], [1e-6, 1 - 1e-6]])
    with pytest.raises(ConvergenceError) as info:
        stationary_power(kernel, tol=1e-15, max_iters=10, start=np.array([1.0, 0.0]))
    assert "two_step_l1" in info.value.diagnostic


# ---------------------------------------------------------------- FPI loop


def test_decoupled_game_reaches_policy_stationary_law_after_one_step(rng):
    rewards, kernel, gamma, _ = random_mdp(rng, 4, 2, gamma=0.5)
    env = tabular_env(rewards, kernel, gamma)
    result = fpi_solve(env, uniform_population(4), FpiConfig(sweeps_per_iter=200, outer_iters=5))
    optimal = best_response(uniform_population(4), env, tol=1e-14)
    expected = induced_population(policy_greedy(optimal, env.valid), env)
    for m in result.populations[1:]:
        np.testing.assert_allclose(m, expected, atol=1e-11)


def test_single_state_population_is_constant():
    env = tabular_env([[1.0, 0.5]], [[[1.0], [1.0]]], 0.9)
    result = fpi_solve(env, [1.0], FpiConfig(sweeps_per_iter=3, outer_iters=4))
    assert all(np.array_equal(m, [1.0]) for m in result.populations)


def test_fpi_trace_rows_and_samples(rng):
    env = congestion_env(rng)
    calls = []

    def hook(trace, k, samples, q, m, wall_ms):
        calls.append((k, samples))
        return trace

    fpi_solve(env, uniform_population(4), FpiConfig(sweeps_per_iter=7, outer_iters=3), hook)
    assert calls == [(0, 28), (1, 56), (2, 84)]


def test_fpi_config_validation():
    with pytest.raises(ConfigError):
        FpiConfig(sweeps_per_iter=0)
    with pytest.raises(ConfigError):
        FpiConfig(br_tolerance=0.0)


# ---------------------------------------------------------------- reference equilibrium


def test_ground_truth_of_decoupled_game_is_plain_br_and_ip(rng):
    rewards, kernel, gamma, _ = random_mdp(rng, 4, 3)
    env = tabular_env(rewards, kernel, gamma)
    q, m = ground_truth_mfne(env, GREEDY)
    q_ref = best_response(uniform_population(4), env, tol=1e-13)
    m_ref = induced_population(policy_greedy(q_ref, env.valid), env, tol=1e-13)
    np.testing.assert_allclose(q, q_ref, atol=1e-10)
    np.testing.assert_allclose(m, m_ref, atol=1e-10)


def test_ground_truth_of_congestion_game_is_an_equilibrium(rng):
    env = congestion_env(rng)
    op = PolicyOperator("softmax", 5.0)
    q, m = ground_truth_mfne(env, op, tol=1e-11)
    assert max(mfne_residual(q, m, op, env)) <= 1e-9
    # one more exact FPI step leaves the population in place
    assert np.linalg.norm(_GammaMap(env, op, 1e-13, 1e-13)(m) - m) <= 1e-10


def test_ground_truth_needs_pinned_schedule(rng):
    env = congestion_env(rng)
    with pytest.raises(ConfigError, match="pass k"):
        ground_truth_mfne(env, PolicyOperator("softmax", 1.0, "linear"))


def test_plain_iteration_rejects_non_contracting_ring(ring):
    op = PolicyOperator("softmax", 2500.0)
    with pytest.raises(ConvergenceError, match="not contracting"):
        ground_truth_mfne(ring, op, method="fpi", br_tol=1e-10, ip_tol=1e-11)


def test_ring_reference_at_final_temperature(ring, ring_reference):
    op = PolicyOperator("softmax", 2500.0)
    q, m = ring_reference["q"], ring_reference["m"]
    assert np.linalg.norm(_GammaMap(ring, op, 1e-13, 1e-13)(m) - m) < 1e-10
    assert max(mfne_residual(q, m, op, ring)) <= 1e-8
