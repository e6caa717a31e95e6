# SPDX-License-Identifier: MIT
"""Environments, behavior policies and the corrupted-dataset generator."""
import abc
import logging
from typing import Callable, Optional, Tuple, Union

import numpy as np

from cawr.discretize import NearestCodebook, UniformDiscretizer
from cawr.errors import ConfigurationError, DataValidationError
from cawr.mdp import (
    ROW_TOLERANCE,
    Dataset,
    TabularMDP,
    finite_horizon_values,
    greedy_policy,
    value_iteration,
)
from cawr.schemas import DatasetMetadata

logger = logging.getLogger(__name__)


# Policies
class BehaviorPolicy(abc.ABC):
    """A stochastic policy acting on a task's internal state representation."""

    name: str = "policy"

    @abc.abstractmethod
    def sample(self, states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Draw one action per state."""


class GaussianPolicy(BehaviorPolicy):
    """a = offset + gain * s + std * N(0, 1); std = 0 gives a deterministic policy."""

    def __init__(self, offset: float = 0.0, gain: float = 0.0, std: float = 0.0, name: Optional[str] = None):
        if std < 0:
            raise ConfigurationError("policy std must be non-negative")
        self.offset = float(offset)
        self.gain = float(gain)
        self.std = float(std)
        self.name = name or f"gaussian(offset={self.offset},gain={self.gain},std={self.std})"

    def mean(self, states: np.ndarray) -> np.ndarray:
        return self.offset + self.gain * states

    def sample(self, states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        noise = rng.standard_normal(states.shape)
        return self.mean(states) + self.std * noise


class TabularPolicy(BehaviorPolicy):
    """Stochastic policy table over state and action indices."""

    def __init__(self, table: np.ndarray, name: str = "tabular"):
        table = np.asarray(table, dtype=np.float64)
        if table.ndim != 2:
            raise ConfigurationError("policy table must be 2-D")
        if np.any(table < 0) or np.any(np.abs(table.sum(axis=1) - 1.0) > ROW_TOLERANCE):
            raise ConfigurationError("policy table rows must be probability vectors")
        self.table = table
        self.name = name

    def sample(self, states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        cdf = np.cumsum(self.table[states], axis=1)
        u = rng.random(states.shape[0])[:, None]
        return np.minimum((u >= cdf).sum(axis=1), self.table.shape[1] - 1)


class MixtureBehavior(BehaviorPolicy):
    """pi_beta = (1 - epsilon) * good + epsilon * poor, sampled component first."""

    def __init__(self, good: BehaviorPolicy, poor: BehaviorPolicy, epsilon: float):
        if not 0.0 <= epsilon <= 1.0:
            raise ConfigurationError(f"mixture epsilon must be in [0, 1], got {epsilon}")
        self.good = good
        self.poor = poor
        self.epsilon = float(epsilon)
        self.name = f"mixture({good.name},{poor.name},{self.epsilon})"

    def sample(self, states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        use_poor = rng.random(states.shape[0]) < self.epsilon
        good = self.good.sample(states, rng)
        poor = self.poor.sample(states, rng)
        mask = use_poor.reshape((-1,) + (1,) * (np.ndim(good) - 1))
        return np.where(mask, poor, good)

    @property
    def table(self) -> np.ndarray:
        """Mixed policy table when both components are tabular."""
        if not isinstance(self.good, TabularPolicy) or not isinstance(self.poor, TabularPolicy):
            raise ConfigurationError("mixture table needs two tabular components")
        return (1.0 - self.epsilon) * self.good.table + self.epsilon * self.poor.table


# Tasks
class Task(abc.ABC):
    """Vectorized episodic environment with an encoding to real vectors."""

    name: str = "task"
    state_dim: int = 1
    action_dim: int = 1
    r_max: Optional[float] = None

    @abc.abstractmethod
    def reset(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Start states for ``n`` episodes."""

    @abc.abstractmethod
    def step(
        self, states: np.ndarray, actions: np.ndarray, rng: np.random.Generator
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return next states, rewards and terminal flags."""

    def encode_states(self, states: np.ndarray) -> np.ndarray:
        return np.asarray(states, dtype=np.float64).reshape(-1, self.state_dim)

    def encode_actions(self, actions: np.ndarray) -> np.ndarray:
        return np.asarray(actions, dtype=np.float64).reshape(-1, self.action_dim)

    def decode_actions(self, vectors: np.ndarray) -> np.ndarray:
        return np.asarray(vectors, dtype=np.float64).reshape(-1, self.action_dim)

    def state_discretizer(self):
        return None

    def action_discretizer(self):
        return None

    @abc.abstractmethod
    def score_reference(self, horizon: int) -> Tuple[float, float]:
        """Undiscounted (J_random, J_expert) over ``horizon`` steps."""


class CorruptedBandit(Task):
    """One-step task with r(a) = -(a - optimum)^2 and a constant state."""

    name = "bandit"

    def __init__(self, optimum: float = 1.0, low: float = -2.0, high: float = 2.0):
        if high <= low:
            raise ConfigurationError("bandit action range is empty")
        self.optimum = float(optimum)
        self.low = float(low)
        self.high = float(high)
        self.r_max = 0.0

    def reset(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return np.zeros((n, 1))

    def step(self, states, actions, rng):
        actions = np.clip(np.asarray(actions, dtype=np.float64).reshape(-1, 1), self.low, self.high)
        rewards = -((actions[:, 0] - self.optimum) ** 2)
        return states.copy(), rewards, np.ones(states.shape[0], dtype=bool)

    def decode_actions(self, vectors):
        return np.clip(super().decode_actions(vectors), self.low, self.high)

    def action_discretizer(self, bins: int = 40):
        return UniformDiscretizer([self.low], [self.high], [bins])

    def score_reference(self, horizon: int) -> Tuple[float, float]:
        width = self.high - self.low
        centre = 0.5 * (self.low + self.high)
        j_random = -(width ** 2 / 12.0 + (centre - self.optimum) ** 2)
        return j_random, 0.0


class LinearQuadraticTask(Task):
    """1-D regulator: s' = s + a, r = -(s^2 + a^2), start s ~ U[-1, 1]."""

    name = "lqr"

    def __init__(self):
        self.r_max = 0.0

    def reset(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(-1.0, 1.0, size=(n, 1))

    def step(self, states, actions, rng):
        actions = np.asarray(actions, dtype=np.float64).reshape(-1, 1)
        rewards = -(states[:, 0] ** 2 + actions[:, 0] ** 2)
        return states + actions, rewards, np.zeros(states.shape[0], dtype=bool)

    @staticmethod
    def optimal_gain() -> float:
        """Stationary optimal feedback gain, a = gain * s."""
        p = (1.0 + np.sqrt(5.0)) / 2.0
        return -p / (1.0 + p)

    def score_reference(self, horizon: int) -> Tuple[float, float]:
        # Riccati recursion with no terminal cost; E[s0^2] = 1/3.
        p = 0.0
        for _ in range(horizon):
            p = 1.0 + p / (1.0 + p)
        j_expert = -p / 3.0
        # a ~ U[-1, 1]: E[s_t^2] = (1 + t) / 3, E[a^2] = 1 / 3
        j_random = -sum((2.0 + t) / 3.0 for t in range(horizon))
        return j_random, j_expert


class TabularTask(Task):
    """Runs a TabularMDP; states and actions are encoded as their indices."""

    name = "tabular"

    def __init__(self, mdp: TabularMDP):
        if not np.all(mdp.observed):
            raise ConfigurationError("cannot simulate an MDP with unobserved pairs")
        self.mdp = mdp
        self.n_states = mdp.n_states
        self.n_actions = mdp.n_actions
        self.r_max = float(mdp.rewards.max()) if mdp.r_max is None else mdp.r_max
        self._kernel_cdf = np.cumsum(mdp.transitions, axis=2)
        self._initial_cdf = np.cumsum(mdp.initial)
        self._stochastic_ends = bool(np.any(mdp.termination > 0))

    def reset(self, n: int, rng: np.random.Generator) -> np.ndarray:
        u = rng.random(n)
        return np.minimum(np.searchsorted(self._initial_cdf, u, side="right"), self.n_states - 1)

    def _reward(self, states: np.ndarray, actions: np.ndarray, next_states: np.ndarray) -> np.ndarray:
        return self.mdp.rewards[states, actions]

    def step(self, states, actions, rng):
        actions = np.asarray(actions, dtype=np.int64).reshape(-1)
        cdf = self._kernel_cdf[states, actions]
        u = rng.random(states.shape[0])[:, None]
        next_states = np.minimum((u >= cdf).sum(axis=1), self.n_states - 1)
        rewards = self._reward(states, actions, next_states)
        done = self.mdp.terminal[next_states]
        if self._stochastic_ends:
            done = done | (rng.random(states.shape[0]) < self.mdp.termination[states, actions, next_states])
        return next_states, rewards, done

    def encode_states(self, states):
        return np.asarray(states, dtype=np.float64).reshape(-1, 1)

    def encode_actions(self, actions):
        return np.asarray(actions, dtype=np.float64).reshape(-1, 1)

    def decode_actions(self, vectors):
        vectors = np.asarray(vectors, dtype=np.float64).reshape(-1)
        return np.clip(np.rint(vectors), 0, self.n_actions - 1).astype(np.int64)

    def decode_states(self, vectors: np.ndarray) -> np.ndarray:
        return self.state_discretizer().index(np.asarray(vectors, dtype=np.float64).reshape(-1, self.state_dim))

    def state_discretizer(self):
        return UniformDiscretizer.for_indices(self.n_states)

    def action_discretizer(self):
        return UniformDiscretizer.for_indices(self.n_actions)

    def score_reference(self, horizon: int) -> Tuple[float, float]:
        uniform = np.full((self.n_states, self.n_actions), 1.0 / self.n_actions)
        j_random = float(self.mdp.initial @ finite_horizon_values(self.mdp, horizon, uniform))
        j_expert = float(self.mdp.initial @ finite_horizon_values(self.mdp, horizon))
        return j_random, j_expert


class GridWorld(TabularTask):
    """
    Grid with a terminal goal in the bottom-right corner.

    Reaching the goal pays 1. With probability ``slip`` the intended move is
    replaced by a uniformly random one; moves into walls stay in place.
    States are encoded as (row, col), actions as unit displacements.
    """

    name = "gridworld"
    MOVES = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]])  # up, down, left, right
    REVERSE = np.array([1, 0, 3, 2])

    def __init__(self, rows: int = 5, cols: int = 5, slip: float = 0.1, gamma: float = 0.9):
        if rows * cols < 2:
            raise ConfigurationError("gridworld needs at least two cells")
        if not 0.0 <= slip <= 1.0:
            raise ConfigurationError("slip must be in [0, 1]")
        self.rows = rows
        self.cols = cols
        self.slip = slip
        self.goal = rows * cols - 1
        super().__init__(self._build_mdp(gamma))
        self.state_dim = 2
        self.action_dim = 2
        self.r_max = 1.0

    def _build_mdp(self, gamma: float) -> TabularMDP:
        n = self.rows * self.cols
        n_moves = len(self.MOVES)
        P = np.zeros((n, n_moves, n))
        for s in range(n):
            r, c = divmod(s, self.cols)
            for a in range(n_moves):
                for outcome in range(n_moves):
                    prob = self.slip / n_moves + (1.0 - self.slip if outcome == a else 0.0)
                    dr, dc = self.MOVES[outcome].astype(int)
                    nr = min(max(r + dr, 0), self.rows - 1)
                    nc = min(max(c + dc, 0), self.cols - 1)
                    P[s, a, nr * self.cols + nc] += prob
        P[self.goal] = 0.0
        P[self.goal, :, self.goal] = 1.0
        R = P[:, :, self.goal].copy()
        R[self.goal] = 0.0
        terminal = np.zeros(n, dtype=bool)
        terminal[self.goal] = True
        d0 = np.where(terminal, 0.0, 1.0)
        return TabularMDP(P, R, gamma, d0 / d0.sum(), terminal=terminal)

    def _reward(self, states, actions, next_states):
        return ((next_states == self.goal) & (states != self.goal)).astype(np.float64)

    def encode_states(self, states):
        states = np.asarray(states, dtype=np.int64).reshape(-1)
        return np.stack([states // self.cols, states % self.cols], axis=1).astype(np.float64)

    def encode_actions(self, actions):
        return self.MOVES[np.asarray(actions, dtype=np.int64).reshape(-1)]

    def decode_actions(self, vectors):
        return self.action_discretizer().index(np.asarray(vectors, dtype=np.float64).reshape(-1, 2))

    def state_discretizer(self):
        return UniformDiscretizer([-0.5, -0.5], [self.rows - 0.5, self.cols - 0.5], [self.rows, self.cols])

    def action_discretizer(self):
        return NearestCodebook(self.MOVES)

    def good_policy(self) -> TabularPolicy:
        """Greedy policy of the optimal discounted values."""
        Q, _ = value_iteration(self.mdp)
        return TabularPolicy(greedy_policy(Q), name="gridworld-optimal")

    def poor_policy(self, kind: str = "uniform") -> TabularPolicy:
        """Uniformly random moves, or the reverse of the optimal move."""
        if kind == "uniform":
            table = np.full((self.n_states, self.n_actions), 1.0 / self.n_actions)
            return TabularPolicy(table, name="gridworld-uniform")
        if kind == "reverse":
            table = self.good_policy().table[:, self.REVERSE]
            return TabularPolicy(table, name="gridworld-reverse")
        raise ConfigurationError(f"unknown poor policy {kind!r}")


def generate_dataset(
    task: Union[Task, TabularMDP],
    behavior: MixtureBehavior,
    n_episodes: int,
    horizon: int,
    seed: int,
    advantage_threshold: Optional[float] = None,
) -> Dataset:
    """
    Roll out the behavior mixture and record every transition.

    Episodes run in lockstep and are stored episode-major. The result is a
    pure function of the arguments.

    Args:
        task: environment, or a TabularMDP to simulate directly
        behavior: corrupted mixture (1 - eps) pi_plus + eps pi_minus
        n_episodes: number of episodes
        horizon: maximum steps per episode
        seed: fixes all randomness
        advantage_threshold: good-exploration threshold recorded in metadata

    Returns:
        the generated dataset
    """
    if isinstance(task, TabularMDP):
        task = TabularTask(task)
    if not isinstance(behavior, MixtureBehavior):
        raise ConfigurationError("behavior must be a MixtureBehavior")
    if n_episodes < 1 or horizon < 1:
        raise ConfigurationError("n_episodes and horizon must be at least 1")
    if seed < 0:
        raise ConfigurationError("seed must be non-negative")

    rng = np.random.default_rng(seed)
    states = task.reset(n_episodes, rng)
    alive = np.ones(n_episodes, dtype=bool)
    columns = {k: [] for k in ("episode", "t", "s", "a", "r", "s2", "done")}

    for t in range(horizon):
        live = np.flatnonzero(alive)
        if live.size == 0:
            break
        current = states[live]
        actions = behavior.sample(current, rng)
        next_states, rewards, done = task.step(current, actions, rng)
        columns["episode"].append(live)
        columns["t"].append(np.full(live.size, t))
        columns["s"].append(task.encode_states(current))
        columns["a"].append(task.encode_actions(actions))
        columns["r"].append(np.asarray(rewards, dtype=np.float64))
        columns["s2"].append(task.encode_states(next_states))
        columns["done"].append(np.asarray(done, dtype=bool))
        states[live] = next_states
        alive[live[done]] = False

    merged = {k: np.concatenate(v) for k, v in columns.items()}
    order = np.lexsort((merged["t"], merged["episode"]))
    metadata = DatasetMetadata(
        state_dim=task.state_dim,
        action_dim=task.action_dim,
        epsilon=behavior.epsilon,
        seed=seed,
        r_max=task.r_max,
        task=task.name,
        good_policy=behavior.good.name,
        poor_policy=behavior.poor.name,
        n_episodes=n_episodes,
        horizon=horizon,
        advantage_threshold=advantage_threshold,
    )
    logger.info("generated %d transitions from %d episodes of %s", order.size, n_episodes, task.name)
    return Dataset(
        merged["s"][order],
        merged["a"][order],
        merged["r"][order],
        merged["s2"][order],
        merged["done"][order],
        metadata,
    )


def simulate_returns(
    task: Task,
    act: Callable[[np.ndarray, np.random.Generator], np.ndarray],
    n_episodes: int,
    horizon: int,
    gamma: float,
    seed: int,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Run ``n_episodes`` in lockstep with ``act`` choosing actions.

    Returns:
        per-episode discounted and undiscounted returns
    """
    if n_episodes < 1:
        raise DataValidationError("evaluation needs at least one episode")
    rng = np.random.default_rng(seed)
    states = task.reset(n_episodes, rng)
    alive = np.ones(n_episodes, dtype=bool)
    discounted = np.zeros(n_episodes)
    undiscounted = np.zeros(n_episodes)
    for t in range(horizon):
        live = np.flatnonzero(alive)
        if live.size == 0:
            break
        current = states[live]
        next_states, rewards, done = task.step(current, act(current, rng), rng)
        discounted[live] += gamma ** t * rewards
        undiscounted[live] += rewards
        states[live] = next_states
        alive[live[done]] = False
    return discounted, undiscounted
