# SPDX-License-Identifier: MIT
"""Expectile value regression, TD regression of Q and the advantage estimate."""
import logging
from dataclasses import dataclass, replace
from typing import List, Tuple, Union

import numpy as np

from cawr.approximator import Approximator, Optimizer, ParamVector
from cawr.errors import ConfigurationError, DataValidationError
from cawr.mdp import Batch

logger = logging.getLogger(__name__)

Real = Union[float, np.ndarray]
StepRule = Union[float, Optimizer]


def _check_tau(tau: float) -> None:
    if not 0.0 < tau < 1.0:
        raise ConfigurationError(f"expectile level tau must be in (0, 1), got {tau}")


def expectile_loss(u: Real, tau: float) -> Real:
    """|tau - 1(u < 0)| * u^2."""
    _check_tau(tau)
    x = np.asarray(u, dtype=np.float64)
    value = np.abs(tau - (x < 0).astype(np.float64)) * x ** 2
    return float(value) if np.ndim(u) == 0 else value


def expectile_grad(u: Real, tau: float) -> Real:
    """d/du of the expectile loss: 2 |tau - 1(u < 0)| * u."""
    _check_tau(tau)
    x = np.asarray(u, dtype=np.float64)
    value = 2.0 * np.abs(tau - (x < 0).astype(np.float64)) * x
    return float(value) if np.ndim(u) == 0 else value


@dataclass(frozen=True)
class ValueSnapshot:
    """
    Q and V networks with their lagged copies.

    ``q_target`` is Q_k, moved only by ``soft_update``; ``v_k`` is V frozen
    by ``begin_iteration``. Both targets are read, never trained.
    """

    q: Approximator
    v: Approximator
    q_target: Approximator
    v_k: Approximator
    tau: float = 0.7
    soft_update_coeff: float = 0.005
    gamma: float = 0.99
    iteration: int = 0

    def __post_init__(self):
        _check_tau(self.tau)
        if not 0.0 < self.soft_update_coeff <= 1.0:
            raise ConfigurationError(f"soft update coefficient must be in (0, 1], got {self.soft_update_coeff}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigurationError(f"gamma must be in [0, 1], got {self.gamma}")
        if self.q.output_dim != 1 or self.v.output_dim != 1:
            raise ConfigurationError("Q and V networks must have a scalar output")
        if self.q.input_dim <= self.v.input_dim:
            raise ConfigurationError("Q takes the state and the action, so its input must be wider than V's")

    @classmethod
    def initial(
        cls, q: Approximator, v: Approximator, tau: float = 0.7, soft_update_coeff: float = 0.005, gamma: float = 0.99
    ) -> "ValueSnapshot":
        return cls(q, v, q, v, tau, soft_update_coeff, gamma, 0)

    @property
    def state_dim(self) -> int:
        return self.v.input_dim

    @property
    def action_dim(self) -> int:
        return self.q.input_dim - self.v.input_dim


def _as_optimizer(step: StepRule) -> Optimizer:
    return step if isinstance(step, Optimizer) else Optimizer(float(step))


def _check_batch(batch: Batch) -> int:
    n = len(batch)
    if n == 0:
        raise DataValidationError("batch is empty")
    return n


def _state_action(states: np.ndarray, actions: np.ndarray) -> np.ndarray:
    return np.hstack([np.atleast_2d(states), np.atleast_2d(actions)])


def begin_iteration(snapshot: ValueSnapshot) -> ValueSnapshot:
    """Freeze V_k from the live V and stamp the next iteration."""
    return replace(snapshot, v_k=snapshot.v, iteration=snapshot.iteration + 1)


def value_loss_and_grad(batch: Batch, snapshot: ValueSnapshot) -> Tuple[float, ParamVector]:
    """Mean expectile loss of Q_k(s, a) - V(s) and its gradient in V's parameters."""
    n = _check_batch(batch)
    q_k = snapshot.q_target(_state_action(batch.states, batch.actions))[:, 0]
    v, tape = snapshot.v.forward(batch.states)
    u = q_k - v[:, 0]
    loss = float(np.mean(expectile_loss(u, snapshot.tau)))
    grad_v = -expectile_grad(u, snapshot.tau) / n
    return loss, snapshot.v.backward(tape, grad_v[:, None])


def q_loss_and_grad(batch: Batch, snapshot: ValueSnapshot) -> Tuple[float, ParamVector]:
    """Mean squared TD error against r + gamma * V_k(s') and its gradient in Q's parameters."""
    n = _check_batch(batch)
    bootstrap = snapshot.v_k(batch.next_states)[:, 0]
    target = batch.rewards + snapshot.gamma * (~batch.terminals) * bootstrap
    q, tape = snapshot.q.forward(_state_action(batch.states, batch.actions))
    u = target - q[:, 0]
    loss = float(np.mean(u ** 2))
    return loss, snapshot.q.backward(tape, (-2.0 * u / n)[:, None])


def update_value(batch: Batch, snapshot: ValueSnapshot, step: StepRule) -> Tuple[ValueSnapshot, float]:
    """
    One gradient step of V on the expectile loss.

    Args:
        batch: uniform batch D1
        snapshot: current value snapshot
        step: learning rate or optimizer

    Returns:
        the updated snapshot and the loss before the step
    """
    loss, grads = value_loss_and_grad(batch, snapshot)
    params = _as_optimizer(step).step(snapshot.v.params, grads)
    return replace(snapshot, v=snapshot.v.with_params(params)), loss


def update_q(batch: Batch, snapshot: ValueSnapshot, step: StepRule) -> Tuple[ValueSnapshot, float]:
    """One gradient step of Q on the TD loss; returns the snapshot and the loss before the step."""
    loss, grads = q_loss_and_grad(batch, snapshot)
    params = _as_optimizer(step).step(snapshot.q.params, grads)
    return replace(snapshot, q=snapshot.q.with_params(params)), loss


def soft_update(snapshot: ValueSnapshot) -> ValueSnapshot:
    """Q_target <- (1 - c) Q_target + c Q."""
    c = snapshot.soft_update_coeff
    target = snapshot.q_target.params
    values = (1.0 - c) * target.values + c * snapshot.q.params.values
    params = target.with_values(values, version=snapshot.q.params.version)
    return replace(snapshot, q_target=snapshot.q_target.with_params(params))


def advantage(snapshot: ValueSnapshot, states, actions) -> Real:
    """
    A(s, a) = Q(s, a) - V(s) from the live networks.

    Raises:
        DataValidationError: if the state or action width does not match the networks
    """
    s = np.asarray(states, dtype=np.float64)
    a = np.asarray(actions, dtype=np.float64)
    single = s.ndim == 1
    s2 = np.atleast_2d(s)
    a2 = np.atleast_2d(a)
    if s2.shape[1] != snapshot.state_dim or a2.shape[1] != snapshot.action_dim:
        raise DataValidationError(
            f"expected state/action widths ({snapshot.state_dim}, {snapshot.action_dim}), "
            f"got ({s2.shape[1]}, {a2.shape[1]})"
        )
    if s2.shape[0] != a2.shape[0]:
        raise DataValidationError("states and actions must have the same number of rows")
    adv = snapshot.q(_state_action(s2, a2))[:, 0] - snapshot.v(s2)[:, 0]
    return float(adv[0]) if single else adv


def pretrain_values(
    snapshot: ValueSnapshot,
    dataset,
    iterations: int,
    batch_size: int,
    sample,
    value_step: StepRule,
    q_step: StepRule,
) -> Tuple[ValueSnapshot, List[Tuple[float, float]]]:
    """
    Fit V and Q before any policy learning.

    Args:
        snapshot: starting value snapshot
        dataset: source of the batches
        iterations: number of value/Q steps
        batch_size: transitions per step
        sample: callable returning ``batch_size`` uniform indices
        value_step: learning rate or optimizer for V
        q_step: learning rate or optimizer for Q

    Returns:
        the trained snapshot and the (value, q) losses per step
    """
    value_opt = _as_optimizer(value_step)
    q_opt = _as_optimizer(q_step)
    losses = []
    for _ in range(iterations):
        snapshot = begin_iteration(snapshot)
        batch = dataset.batch(sample(batch_size))
        snapshot, v_loss = update_value(batch, snapshot, value_opt)
        snapshot, q_loss = update_q(batch, snapshot, q_opt)
        snapshot = soft_update(snapshot)
        losses.append((v_loss, q_loss))
    if losses:
        logger.info("pre-trained values for %d steps, final losses v=%.6g q=%.6g", iterations, *losses[-1])
    return snapshot, losses
