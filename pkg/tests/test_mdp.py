# SPDX-License-Identifier: MIT
"""Dataset, finite MDP and exact solver tests."""
import numpy as np
import pytest

from cawr.discretize import NearestCodebook, ProductDiscretizer, UniformDiscretizer, discretizer_from_dict
from cawr.errors import ConfigurationError, DataValidationError
from cawr.mdp import (
    Dataset,
    TabularMDP,
    classify_explorations,
    empirical_behavior,
    empirical_mdp,
    exact_advantage,
    exact_q_v,
    finite_horizon_values,
    greedy_policy,
    policy_return,
    value_iteration,
)
from cawr.schemas import DatasetMetadata


def _columns(n=3):
    states = np.arange(n, dtype=float).reshape(n, 1)
    return states, np.zeros((n, 1)), np.ones(n), states + 1.0, np.zeros(n, dtype=bool)


def _column(values):
    return np.asarray(values, dtype=float)[:, None]


def test_dataset_is_immutable():
    """Test that columns are read-only copies of the inputs."""
    states, actions, rewards, next_states, terminals = _columns()
    dataset = Dataset(states, actions, rewards, next_states, terminals)
    states[0, 0] = 99.0
    assert dataset.states[0, 0] == 0.0
    with pytest.raises(ValueError):
        dataset.states[0, 0] = 5.0
    with pytest.raises(ValueError):
        dataset.rewards[0] = 5.0


def test_dataset_indices_are_dense():
    """Test transition indices and batch gathering."""
    dataset = Dataset(*_columns(4))
    assert [t.index for t in dataset] == [0, 1, 2, 3]
    batch = dataset.batch([3, 3, 0])
    assert len(batch) == 3
    assert batch.states[:, 0].tolist() == [3.0, 3.0, 0.0]
    with pytest.raises(DataValidationError):
        dataset.batch([4])
    with pytest.raises(DataValidationError):
        dataset.batch([])
    with pytest.raises(DataValidationError):
        dataset[7]


@pytest.mark.parametrize(
    "mutate",
    [
        lambda c: (c[0][:0], c[1][:0], c[2][:0], c[3][:0], c[4][:0]),
        lambda c: (c[0], c[1][:2], c[2], c[3], c[4]),
        lambda c: (c[0], c[1], c[2], np.zeros((3, 2)), c[4]),
        lambda c: (c[0], c[1], np.array([1.0, np.nan, 0.0]), c[3], c[4]),
        lambda c: (np.array([[np.inf], [0.0], [1.0]]), c[1], c[2], c[3], c[4]),
    ],
)
def test_dataset_rejects_inconsistent_columns(mutate):
    """Test empty, ragged, dimension-drifting and non-finite inputs."""
    with pytest.raises(DataValidationError):
        Dataset(*mutate(_columns()))


def test_dataset_checks_metadata_and_reward_bound():
    """Test the r_max assertion and the metadata dimensions."""
    states, actions, rewards, next_states, terminals = _columns()
    with pytest.raises(DataValidationError):
        Dataset(states, actions, rewards, next_states, terminals, DatasetMetadata(state_dim=1, action_dim=1, r_max=0.5))
    with pytest.raises(DataValidationError):
        Dataset(states, actions, rewards, next_states, terminals, DatasetMetadata(state_dim=2, action_dim=1))


def test_episode_starts():
    """Test that a chain of continuing transitions is one episode."""
    states = np.array([[0.0], [1.0], [5.0], [6.0]])
    next_states = np.array([[1.0], [2.0], [6.0], [7.0]])
    terminals = np.array([False, True, False, False])
    dataset = Dataset(states, np.zeros((4, 1)), np.zeros(4), next_states, terminals)
    assert dataset.episode_starts().tolist() == [0, 2]


def test_tabular_mdp_validates_rows():
    """Test kernel rows, rewards and start distribution checks."""
    P = np.full((2, 1, 2), 0.5)
    with pytest.raises(DataValidationError):
        TabularMDP(P * 1.1, np.zeros((2, 1)), 0.9, np.array([1.0, 0.0]))
    with pytest.raises(DataValidationError):
        TabularMDP(P, np.zeros((2, 1)), 0.9, np.array([0.7, 0.0]))
    with pytest.raises(DataValidationError):
        TabularMDP(P, np.ones((2, 1)), 0.9, np.array([1.0, 0.0]), r_max=0.5)
    with pytest.raises(ConfigurationError):
        TabularMDP(P, np.zeros((2, 1)), -0.1, np.array([1.0, 0.0]))
    with pytest.raises(ConfigurationError):
        TabularMDP(P, np.zeros((2, 1)), 1.5, np.array([1.0, 0.0]))
    with pytest.raises(DataValidationError):
        TabularMDP(P, np.zeros((2, 1)), 0.9, np.array([1.0, 0.0]), termination=np.full((2, 1, 2), 1.5))


def test_single_state_geometric_series():
    """Test V = r / (1 - gamma) on one state with one action."""
    mdp = TabularMDP(np.ones((1, 1, 1)), np.ones((1, 1)), 0.5, np.ones(1))
    Q, V = exact_q_v(mdp, np.ones((1, 1)))
    assert V[0] == pytest.approx(2.0, abs=1e-12)
    assert Q[0, 0] == pytest.approx(2.0, abs=1e-12)


def test_myopic_q_equals_reward():
    """Test that gamma = 0 leaves Q = r exactly."""
    rng = np.random.default_rng(0)
    P = rng.dirichlet(np.ones(3), size=(3, 2))
    R = rng.normal(size=(3, 2))
    mdp = TabularMDP(P, R, 0.0, np.full(3, 1.0 / 3.0))
    Q, _ = exact_q_v(mdp, np.full((3, 2), 0.5))
    np.testing.assert_array_equal(Q, R)


def test_exact_q_v_satisfies_bellman():
    """Test the Bellman residual on a random MDP and policy."""
    rng = np.random.default_rng(1)
    P = rng.dirichlet(np.ones(4), size=(4, 3))
    R = rng.normal(size=(4, 3))
    mdp = TabularMDP(P, R, 0.95, np.full(4, 0.25))
    pi = rng.dirichlet(np.ones(3), size=4)
    Q, V = exact_q_v(mdp, pi)
    np.testing.assert_allclose(Q, R + 0.95 * np.einsum("sat,t->sa", P, V), atol=1e-9)
    np.testing.assert_allclose(V, (pi * Q).sum(axis=1), atol=1e-9)
    np.testing.assert_allclose(exact_advantage(mdp, pi), Q - V[:, None], atol=1e-12)
    assert policy_return(mdp, pi) == pytest.approx(float(mdp.initial @ V))


def test_exact_q_v_rejects_non_stochastic_policy(chain_mdp):
    """Test the policy validation."""
    with pytest.raises(DataValidationError):
        exact_q_v(chain_mdp, np.array([[0.5, 0.6], [1.0, 0.0]]))
    with pytest.raises(DataValidationError):
        exact_q_v(chain_mdp, np.ones((3, 2)) / 2)


def test_exact_values_match_monte_carlo(chain_mdp):
    """Test the two-state chain against simulated discounted returns."""
    pi = np.array([[0.3, 0.7], [0.6, 0.4]])
    _, V = exact_q_v(chain_mdp, pi)
    rng = np.random.default_rng(7)
    n, horizon = 20000, 200
    state = np.zeros(n, dtype=np.int64)
    returns = np.zeros(n)
    for t in range(horizon):
        action = (rng.random(n) < pi[state, 1]).astype(np.int64)
        returns += 0.9 ** t * chain_mdp.rewards[state, action]
        state = np.where(action == 1, 1 - state, state)
    stderr = returns.std() / np.sqrt(n)
    assert abs(returns.mean() - V[0]) <= 4 * stderr + 1e-6


def test_value_iteration_and_greedy(chain_mdp):
    """Test that the greedy policy of value iteration is optimal in the chain."""
    Q, V = value_iteration(chain_mdp)
    pi = greedy_policy(Q)
    # go to state 1 and stay there
    assert pi[0].tolist() == [0.0, 1.0]
    assert pi[1].tolist() == [1.0, 0.0]
    _, V_pi = exact_q_v(chain_mdp, pi)
    np.testing.assert_allclose(V, V_pi, atol=1e-9)


def test_finite_horizon_values(chain_mdp):
    """Test backward induction against hand-computed returns."""
    stay = np.array([[1.0, 0.0], [1.0, 0.0]])
    np.testing.assert_allclose(finite_horizon_values(chain_mdp, 3, stay), [0.0, 3.0])
    np.testing.assert_allclose(finite_horizon_values(chain_mdp, 3), [2.0, 3.0])
    with pytest.raises(ConfigurationError):
        finite_horizon_values(chain_mdp, 0)


def test_empirical_mdp_recovers_deterministic_kernel(chain_mdp):
    """Test ML estimation when every pair is seen once."""
    states = np.array([0, 0, 1, 1])
    actions = np.array([0, 1, 0, 1])
    next_states = np.array([0, 1, 1, 0])
    rewards = chain_mdp.rewards[states, actions]
    dataset = Dataset(
        states[:, None].astype(float),
        actions[:, None].astype(float),
        rewards,
        next_states[:, None].astype(float),
        np.zeros(4, dtype=bool),
    )
    disc = UniformDiscretizer.for_indices(2)
    mdp = empirical_mdp(dataset, disc, disc, gamma=0.9)
    assert mdp.observed.all()
    np.testing.assert_array_equal(mdp.transitions, chain_mdp.transitions)
    np.testing.assert_array_equal(mdp.rewards, chain_mdp.rewards)


def test_empirical_mdp_flags_absent_pairs():
    """Test that unseen pairs are marked absent rather than zero-filled."""
    dataset = Dataset(np.zeros((2, 1)), np.zeros((2, 1)), np.ones(2), np.ones((2, 1)), np.array([False, True]))
    disc = UniformDiscretizer.for_indices(2)
    mdp = empirical_mdp(dataset, disc, disc)
    assert mdp.observed.tolist() == [[True, False], [False, False]]
    assert np.isnan(mdp.rewards[0, 1])
    assert mdp.terminal.tolist() == [False, False]
    assert mdp.termination[0, 0, 1] == 0.5


def test_empirical_mdp_keeps_terminal_flags_per_transition():
    """Test that a cell entered by terminal and non-terminal steps still bootstraps the latter."""
    dataset = Dataset(
        _column([0, 0, 1]),
        _column([0, 1, 0]),
        np.array([0.0, 0.0, 1.0]),
        _column([1, 1, 1]),
        np.array([False, True, False]),
    )
    disc = UniformDiscretizer.for_indices(2)
    mdp = empirical_mdp(dataset, disc, disc, gamma=0.5)
    Q, V = exact_q_v(mdp, np.array([[0.5, 0.5], [1.0, 0.0]]))
    assert V[1] == pytest.approx(2.0, abs=1e-12)
    assert Q[0, 0] == pytest.approx(1.0, abs=1e-12)
    assert Q[0, 1] == pytest.approx(0.0, abs=1e-12)


def test_empirical_mdp_concentrates():
    """Test kernel estimates from many samples of a random 3-state MDP."""
    rng = np.random.default_rng(2)
    P = rng.dirichlet(np.ones(3), size=(3, 2))
    n = 100000
    s = rng.integers(0, 3, size=n)
    a = rng.integers(0, 2, size=n)
    cdf = np.cumsum(P[s, a], axis=1)
    s2 = np.minimum((rng.random(n)[:, None] >= cdf).sum(axis=1), 2)
    dataset = Dataset(s[:, None].astype(float), a[:, None].astype(float), np.zeros(n),
                      s2[:, None].astype(float), np.zeros(n, dtype=bool))
    mdp = empirical_mdp(dataset, UniformDiscretizer.for_indices(3), UniformDiscretizer.for_indices(2))
    assert np.max(np.abs(mdp.transitions - P).sum(axis=2)) <= 0.05


def test_empirical_behavior_frequencies():
    """Test per-state action frequencies and the uniform fallback."""
    dataset = Dataset(np.zeros((4, 1)), np.array([[0.0], [0.0], [0.0], [1.0]]), np.zeros(4),
                      np.zeros((4, 1)), np.zeros(4, dtype=bool))
    table = empirical_behavior(dataset, UniformDiscretizer.for_indices(2), UniformDiscretizer.for_indices(2))
    np.testing.assert_allclose(table, [[0.75, 0.25], [0.5, 0.5]])


def test_classify_explorations_uses_its_own_threshold():
    """Test the good-exploration diagnostic."""
    assert classify_explorations([-0.2, 0.05, 0.3], threshold=0.1).tolist() == [False, False, True]
    assert classify_explorations([-0.2, 0.05, 0.3]).tolist() == [False, True, True]


def test_discretizers_round_trip_through_dict():
    """Test uniform, codebook and product discretizers."""
    grid = UniformDiscretizer([0.0, 0.0], [1.0, 2.0], [2, 4])
    assert grid.n_cells == 8
    assert grid.index([0.9, 1.9]) == 7
    assert grid.index(np.array([[0.0, 0.0], [5.0, -5.0]])).tolist() == [0, 4]
    codes = NearestCodebook([[1.0, 0.0], [0.0, 1.0]])
    assert codes.index([0.2, 0.9]) == 1
    product = ProductDiscretizer([grid, codes])
    assert product.dim == 4 and product.n_cells == 16
    rebuilt = discretizer_from_dict(product.to_dict())
    x = np.random.default_rng(0).uniform(0, 2, size=(10, 4))
    np.testing.assert_array_equal(rebuilt.index(x), product.index(x))
    with pytest.raises(DataValidationError):
        grid.index([1.0, 2.0, 3.0])
