# SPDX-License-Identifier: MIT
"""Transitions, datasets, finite MDPs and exact dynamic-programming solvers."""
import logging
from dataclasses import dataclass
from typing import Iterator, List, Optional, Tuple

import numpy as np

from cawr.errors import ConfigurationError, DataValidationError
from cawr.schemas import DatasetMetadata

logger = logging.getLogger(__name__)

ROW_TOLERANCE = 1e-9


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=np.float64, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Transition:
    """A single (s, a, r, s', done) record with its dataset index."""

    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    terminal: bool
    index: int


@dataclass(frozen=True, eq=False)
class Batch:
    """Stacked transitions selected by index."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray
    indices: np.ndarray

    def __len__(self) -> int:
        return int(self.indices.shape[0])


class Dataset:
    """Immutable offline dataset stored column-wise."""

    def __init__(
        self,
        states: np.ndarray,
        actions: np.ndarray,
        rewards: np.ndarray,
        next_states: np.ndarray,
        terminals: np.ndarray,
        metadata: Optional[DatasetMetadata] = None,
    ):
        states = np.asarray(states, dtype=np.float64)
        actions = np.asarray(actions, dtype=np.float64)
        next_states = np.asarray(next_states, dtype=np.float64)
        rewards = np.asarray(rewards, dtype=np.float64).reshape(-1)
        terminals = np.asarray(terminals, dtype=bool).reshape(-1)

        if states.ndim != 2 or actions.ndim != 2 or next_states.ndim != 2:
            raise DataValidationError("states, actions and next_states must be 2-D arrays")
        n = states.shape[0]
        if n < 1:
            raise DataValidationError("a dataset needs at least one transition")
        if not (actions.shape[0] == next_states.shape[0] == rewards.shape[0] == terminals.shape[0] == n):
            raise DataValidationError("all dataset columns must have the same length")
        if next_states.shape[1] != states.shape[1]:
            raise DataValidationError("next_states dimension differs from states dimension")
        for name, column in (("states", states), ("actions", actions), ("next_states", next_states)):
            if not np.all(np.isfinite(column)):
                raise DataValidationError(f"{name} contain non-finite values")
        if not np.all(np.isfinite(rewards)):
            raise DataValidationError("rewards contain non-finite values")

        if metadata is None:
            metadata = DatasetMetadata(state_dim=states.shape[1], action_dim=actions.shape[1])
        if metadata.state_dim != states.shape[1] or metadata.action_dim != actions.shape[1]:
            raise DataValidationError(
                f"metadata dimensions ({metadata.state_dim}, {metadata.action_dim}) do not match "
                f"data ({states.shape[1]}, {actions.shape[1]})"
            )
        if metadata.r_max is not None and np.any(rewards > metadata.r_max):
            worst = int(np.argmax(rewards))
            raise DataValidationError(
                f"reward {rewards[worst]} at index {worst} exceeds r_max={metadata.r_max}"
            )

        self._states = _frozen(states)
        self._actions = _frozen(actions)
        self._rewards = _frozen(rewards)
        self._next_states = _frozen(next_states)
        terminals = terminals.copy()
        terminals.setflags(write=False)
        self._terminals = terminals
        self._metadata = metadata

    @property
    def states(self) -> np.ndarray:
        return self._states

    @property
    def actions(self) -> np.ndarray:
        return self._actions

    @property
    def rewards(self) -> np.ndarray:
        return self._rewards

    @property
    def next_states(self) -> np.ndarray:
        return self._next_states

    @property
    def terminals(self) -> np.ndarray:
        return self._terminals

    @property
    def metadata(self) -> DatasetMetadata:
        return self._metadata

    @property
    def state_dim(self) -> int:
        return int(self._states.shape[1])

    @property
    def action_dim(self) -> int:
        return int(self._actions.shape[1])

    def __len__(self) -> int:
        return int(self._states.shape[0])

    def __getitem__(self, index: int) -> Transition:
        if not 0 <= index < len(self):
            raise DataValidationError(f"transition index {index} out of range [0, {len(self)})")
        return Transition(
            state=self._states[index],
            action=self._actions[index],
            reward=float(self._rewards[index]),
            next_state=self._next_states[index],
            terminal=bool(self._terminals[index]),
            index=index,
        )

    def __iter__(self) -> Iterator[Transition]:
        for i in range(len(self)):
            yield self[i]

    @property
    def transitions(self) -> List[Transition]:
        return list(self)

    def batch(self, indices: np.ndarray) -> Batch:
        """Gather the transitions at ``indices`` (repeats allowed)."""
        indices = np.asarray(indices, dtype=np.int64).reshape(-1)
        if indices.size == 0:
            raise DataValidationError("batch is empty")
        if indices.min() < 0 or indices.max() >= len(self):
            raise DataValidationError(f"batch index out of range [0, {len(self)})")
        return Batch(
            states=self._states[indices],
            actions=self._actions[indices],
            rewards=self._rewards[indices],
            next_states=self._next_states[indices],
            terminals=self._terminals[indices],
            indices=indices,
        )

    def episode_starts(self) -> np.ndarray:
        """Indices whose transition does not continue the previous one."""
        starts = np.ones(len(self), dtype=bool)
        if len(self) > 1:
            continues = ~self._terminals[:-1] & np.all(self._next_states[:-1] == self._states[1:], axis=1)
            starts[1:] = ~continues
        return np.flatnonzero(starts)

    def same_as(self, other: "Dataset") -> bool:
        """Exact equality of every column and the metadata."""
        return (
            np.array_equal(self._states, other.states)
            and np.array_equal(self._actions, other.actions)
            and np.array_equal(self._rewards, other.rewards)
            and np.array_equal(self._next_states, other.next_states)
            and np.array_equal(self._terminals, other.terminals)
            and self._metadata == other.metadata
        )


@dataclass(frozen=True, eq=False)
class TabularMDP:
    """
    Finite MDP with kernel p(s'|s,a), rewards r(s,a), discount and start distribution.

    ``observed`` marks (s, a) pairs that carry estimates; rows of unobserved
    pairs hold NaN. Entering a ``terminal`` state ends the episode, so its
    value is never bootstrapped. ``termination`` of shape (S, A, S) is the
    probability that the step s -a-> s' ends the episode; it carries
    per-transition terminal flags of estimated MDPs.
    """

    transitions: np.ndarray
    rewards: np.ndarray
    gamma: float
    initial: np.ndarray
    terminal: Optional[np.ndarray] = None
    observed: Optional[np.ndarray] = None
    r_max: Optional[float] = None
    termination: Optional[np.ndarray] = None

    def __post_init__(self):
        P = np.asarray(self.transitions, dtype=np.float64)
        R = np.asarray(self.rewards, dtype=np.float64)
        d0 = np.asarray(self.initial, dtype=np.float64)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise DataValidationError("transition kernel must have shape (S, A, S)")
        n_states, n_actions = P.shape[0], P.shape[1]
        if R.shape != (n_states, n_actions):
            raise DataValidationError("reward table must have shape (S, A)")
        if d0.shape != (n_states,):
            raise DataValidationError("initial distribution must have shape (S,)")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigurationError(f"gamma must be in [0, 1], got {self.gamma}")

        observed = (
            np.ones((n_states, n_actions), dtype=bool)
            if self.observed is None
            else np.asarray(self.observed, dtype=bool)
        )
        terminal = (
            np.zeros(n_states, dtype=bool) if self.terminal is None else np.asarray(self.terminal, dtype=bool)
        )
        if observed.shape != (n_states, n_actions) or terminal.shape != (n_states,):
            raise DataValidationError("observed/terminal masks have the wrong shape")
        termination = (
            np.zeros_like(P) if self.termination is None else np.asarray(self.termination, dtype=np.float64)
        )
        if termination.shape != P.shape:
            raise DataValidationError("termination probabilities must have shape (S, A, S)")
        if np.any(~(termination >= 0.0)) or np.any(termination > 1.0):
            raise DataValidationError("termination probabilities must lie in [0, 1]")

        rows = P[observed]
        if np.any(rows < 0) or np.any(np.abs(rows.sum(axis=1) - 1.0) > ROW_TOLERANCE):
            raise DataValidationError("every observed kernel row must be a probability vector")
        if not np.all(np.isfinite(R[observed])):
            raise DataValidationError("observed rewards must be finite")
        if self.r_max is not None and np.any(R[observed] > self.r_max):
            raise DataValidationError(f"rewards exceed r_max={self.r_max}")
        if np.any(d0 < 0) or abs(d0.sum() - 1.0) > ROW_TOLERANCE:
            raise DataValidationError("initial distribution must sum to 1")

        for name, value in (
            ("transitions", P),
            ("rewards", R),
            ("initial", d0),
            ("observed", observed),
            ("terminal", terminal),
            ("termination", termination),
        ):
            value = value.copy()
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def n_states(self) -> int:
        return int(self.transitions.shape[0])

    @property
    def n_actions(self) -> int:
        return int(self.transitions.shape[1])

    def continuation_kernel(self) -> np.ndarray:
        """Kernel with absent rows zeroed and the terminating mass of each step removed."""
        P = np.where(self.observed[:, :, None], self.transitions, 0.0)
        return P * (1.0 - self.termination) * (~self.terminal)[None, None, :]

    def filled_rewards(self) -> np.ndarray:
        return np.where(self.observed, self.rewards, 0.0)


def validate_policy_table(policy: np.ndarray, mdp: TabularMDP) -> np.ndarray:
    """
    Check a stochastic policy table against an MDP.

    Raises:
        DataValidationError: when rows are not distributions or put mass on absent pairs
    """
    pi = np.asarray(policy, dtype=np.float64)
    if pi.shape != (mdp.n_states, mdp.n_actions):
        raise DataValidationError(f"policy must have shape {(mdp.n_states, mdp.n_actions)}, got {pi.shape}")
    if np.any(pi < 0) or np.any(np.abs(pi.sum(axis=1) - 1.0) > ROW_TOLERANCE):
        raise DataValidationError("policy rows must be probability vectors")
    supported = mdp.observed.any(axis=1)
    leak = np.where(mdp.observed, 0.0, pi)[supported].sum(axis=1)
    if np.any(leak > 1e-12):
        raise DataValidationError("policy puts mass on unobserved (s, a) pairs")
    return np.where(mdp.observed, pi, 0.0)


def exact_q_v(mdp: TabularMDP, policy: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Solve the Bellman equations of ``policy`` exactly.

    States without any observed action are treated as absorbing with value 0.

    Args:
        mdp: finite MDP
        policy: (S, A) stochastic policy table

    Returns:
        Q of shape (S, A), NaN on unobserved pairs, and V of shape (S,)
    """
    pi = validate_policy_table(policy, mdp)
    P = mdp.continuation_kernel()
    R = mdp.filled_rewards()
    P_pi = np.einsum("sa,sat->st", pi, P)
    R_pi = (pi * R).sum(axis=1)
    system = np.eye(mdp.n_states) - mdp.gamma * P_pi
    try:
        V = np.linalg.solve(system, R_pi)
    except np.linalg.LinAlgError as e:
        raise ConfigurationError(f"policy evaluation is singular (gamma={mdp.gamma}): {e}") from e
    if not np.all(np.isfinite(V)):
        raise ConfigurationError("policy evaluation produced non-finite values")
    Q = R + mdp.gamma * np.einsum("sat,t->sa", P, V)
    Q = np.where(mdp.observed, Q, np.nan)
    return Q, V


def exact_advantage(mdp: TabularMDP, policy: np.ndarray) -> np.ndarray:
    """A(s, a) = Q(s, a) - V(s) under ``policy``."""
    Q, V = exact_q_v(mdp, policy)
    return Q - V[:, None]


def policy_return(mdp: TabularMDP, policy: np.ndarray) -> float:
    """Expected discounted return J = d0 . V."""
    _, V = exact_q_v(mdp, policy)
    return float(mdp.initial @ V)


def value_iteration(mdp: TabularMDP, tol: float = 1e-12, max_iterations: int = 100000) -> Tuple[np.ndarray, np.ndarray]:
    """Optimal Q and V by value iteration over observed pairs."""
    if mdp.gamma >= 1.0:
        raise ConfigurationError("value iteration needs gamma < 1; use finite_horizon_values")
    P = mdp.continuation_kernel()
    R = mdp.filled_rewards()
    V = np.zeros(mdp.n_states)
    for _ in range(max_iterations):
        Q = R + mdp.gamma * np.einsum("sat,t->sa", P, V)
        Q = np.where(mdp.observed, Q, -np.inf)
        V_new = np.where(mdp.observed.any(axis=1), Q.max(axis=1), 0.0)
        if np.max(np.abs(V_new - V)) < tol:
            V = V_new
            break
        V = V_new
    Q = R + mdp.gamma * np.einsum("sat,t->sa", P, V)
    return np.where(mdp.observed, Q, np.nan), V


def greedy_policy(q_values: np.ndarray) -> np.ndarray:
    """Deterministic policy table picking the first maximizing action."""
    Q = np.where(np.isnan(q_values), -np.inf, q_values)
    table = np.zeros_like(Q)
    best = np.argmax(Q, axis=1)
    table[np.arange(Q.shape[0]), best] = 1.0
    return table


def finite_horizon_values(
    mdp: TabularMDP, horizon: int, policy: Optional[np.ndarray] = None, gamma: float = 1.0
) -> np.ndarray:
    """
    Backward induction over ``horizon`` steps.

    Args:
        mdp: finite MDP
        horizon: number of decision steps
        policy: policy table to evaluate; None computes optimal values
        gamma: per-step discount (1.0 gives undiscounted returns)

    Returns:
        state values at the first step
    """
    if horizon < 1:
        raise ConfigurationError("horizon must be at least 1")
    P = mdp.continuation_kernel()
    R = mdp.filled_rewards()
    pi = None if policy is None else validate_policy_table(policy, mdp)
    V = np.zeros(mdp.n_states)
    for _ in range(horizon):
        Q = R + gamma * np.einsum("sat,t->sa", P, V)
        if pi is None:
            Q = np.where(mdp.observed, Q, -np.inf)
            V = np.where(mdp.observed.any(axis=1), Q.max(axis=1), 0.0)
        else:
            V = (pi * Q).sum(axis=1)
    return V


def empirical_mdp(dataset: Dataset, state_discretizer, action_discretizer, gamma: float = 0.99) -> TabularMDP:
    """
    Maximum-likelihood MDP estimated from a dataset.

    Pairs never seen in the data are flagged absent. Terminal flags stay
    per transition: ``termination[s, a, s']`` is the share of observed
    s -a-> s' steps that ended the episode, so a cell entered both ways
    keeps bootstrapping for its non-terminal arrivals. The start
    distribution is the empirical distribution of episode-start states.
    """
    n_s = state_discretizer.n_cells
    n_a = action_discretizer.n_cells
    s = state_discretizer.index(dataset.states)
    a = action_discretizer.index(dataset.actions)
    s2 = state_discretizer.index(dataset.next_states)

    counts = np.zeros((n_s, n_a, n_s))
    np.add.at(counts, (s, a, s2), 1.0)
    reward_sums = np.zeros((n_s, n_a))
    np.add.at(reward_sums, (s, a), dataset.rewards)
    visits = counts.sum(axis=2)
    observed = visits > 0

    with np.errstate(invalid="ignore", divide="ignore"):
        P = np.where(observed[:, :, None], counts / visits[:, :, None], np.nan)
        R = np.where(observed, reward_sums / visits, np.nan)

    done = dataset.terminals
    terminal_counts = np.zeros((n_s, n_a, n_s))
    np.add.at(terminal_counts, (s[done], a[done], s2[done]), 1.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        termination = np.where(counts > 0, terminal_counts / counts, 0.0)

    starts = s[dataset.episode_starts()]
    d0 = np.bincount(starts, minlength=n_s).astype(np.float64)
    d0 /= d0.sum()

    logger.debug("empirical MDP: %d states, %d actions, %d observed pairs", n_s, n_a, int(observed.sum()))
    return TabularMDP(
        transitions=P,
        rewards=R,
        gamma=gamma,
        initial=d0,
        observed=observed,
        r_max=dataset.metadata.r_max,
        termination=termination,
    )


def empirical_behavior(dataset: Dataset, state_discretizer, action_discretizer) -> np.ndarray:
    """Action frequencies per state cell; unvisited cells get a uniform row."""
    n_s = state_discretizer.n_cells
    n_a = action_discretizer.n_cells
    counts = np.zeros((n_s, n_a))
    np.add.at(counts, (state_discretizer.index(dataset.states), action_discretizer.index(dataset.actions)), 1.0)
    totals = counts.sum(axis=1, keepdims=True)
    uniform = np.full((n_s, n_a), 1.0 / n_a)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(totals > 0, counts / totals, uniform)


def classify_explorations(advantages: np.ndarray, threshold: float = 0.0) -> np.ndarray:
    """True where a dataset action counts as good exploration."""
    return np.asarray(advantages, dtype=np.float64) > threshold
