# SPDX-License-Identifier: MIT
"""Fixed-scale policies, clipped advantage weights and the weighted robust regression step."""
import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from cawr.approximator import Approximator, Optimizer, ParamVector
from cawr.enums import DistributionKind
from cawr.errors import ConfigurationError, DataValidationError
from cawr.losses import RobustLoss, loss_grad, loss_value
from cawr.numerics import population_std
from cawr.replay import AdvantageStats, PriorityScheme, weight_centering
from cawr.tasks import Task, simulate_returns

logger = logging.getLogger(__name__)

# exp(-700) is still a positive double
_MIN_EXPONENT = -700.0


@dataclass(frozen=True)
class PolicySnapshot:
    """pi(.|s) with mean mu(s) from a network and a fixed scale sigma."""

    mean_net: Approximator
    sigma: float
    distribution_kind: DistributionKind = DistributionKind.GAUSSIAN

    def __post_init__(self):
        object.__setattr__(self, "distribution_kind", DistributionKind(self.distribution_kind))
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ConfigurationError(f"policy sigma must be positive, got {self.sigma}")

    @property
    def action_dim(self) -> int:
        return self.mean_net.output_dim

    def mean(self, states) -> np.ndarray:
        return self.mean_net(states)

    def sample(self, states, rng: np.random.Generator) -> np.ndarray:
        mu = self.mean(states)
        if self.distribution_kind == DistributionKind.LAPLACE:
            return mu + rng.laplace(0.0, self.sigma, size=mu.shape)
        return mu + self.sigma * rng.standard_normal(mu.shape)

    def with_params(self, params: ParamVector) -> "PolicySnapshot":
        return replace(self, mean_net=self.mean_net.with_params(params))


@dataclass(frozen=True)
class AdvantageWeight:
    """w = min(exp(c2 (A - c1)), w_max)."""

    lam: float = 0.2
    c1: float = 0.0
    c2: Optional[float] = None
    w_max: float = 1e4

    def __post_init__(self):
        if self.lam <= 0 or self.w_max <= 0:
            raise ConfigurationError("weight lambda and w_max must be positive")
        if self.c2 is None:
            object.__setattr__(self, "c2", 1.0 / self.lam)

    @classmethod
    def from_scheme(
        cls, scheme: PriorityScheme, stats: Optional[AdvantageStats], lam: float, w_max: float
    ) -> "AdvantageWeight":
        """Share the priority function's centering; kinds without one use exp(A / lam)."""
        if stats is None:
            return cls(lam=lam, w_max=w_max)
        c1, c2 = weight_centering(replace(scheme, lam=lam), stats)
        return cls(lam=lam, c1=c1, c2=c2, w_max=w_max)


def weights(adv_weight: AdvantageWeight, advantages) -> Union[float, np.ndarray]:
    """Clipped exponential weights, always in (0, w_max]."""
    adv = np.asarray(advantages, dtype=np.float64)
    exponent = np.clip(
        adv_weight.c2 * (adv - adv_weight.c1), _MIN_EXPONENT, math.log(adv_weight.w_max) + 1.0
    )
    w = np.minimum(np.exp(exponent), adv_weight.w_max)
    return float(w) if np.ndim(advantages) == 0 else w


def policy_loss(
    policy: PolicySnapshot, loss: RobustLoss, states, actions, batch_weights
) -> Tuple[float, ParamVector]:
    """
    J = (1/n) sum_i w_i / (2 sigma^2) sum_j f(a_ij - mu_j(s_i)) and its gradient.

    Args:
        policy: current policy
        loss: per-coordinate regression loss f
        states: (n, state_dim) batch states
        actions: (n, action_dim) dataset actions
        batch_weights: (n,) advantage weights

    Returns:
        the objective and its gradient in the mean network's parameters
    """
    a = np.atleast_2d(np.asarray(actions, dtype=np.float64))
    w = np.asarray(batch_weights, dtype=np.float64).reshape(-1)
    mu, tape = policy.mean_net.forward(np.atleast_2d(states))
    if a.shape != mu.shape:
        raise DataValidationError(f"actions have shape {a.shape}, policy outputs {mu.shape}")
    if w.shape[0] != a.shape[0]:
        raise DataValidationError("need one weight per transition")
    n = a.shape[0]
    if n == 0:
        raise DataValidationError("batch is empty")
    residual = a - mu
    scale = w / (2.0 * policy.sigma ** 2)
    objective = float(np.mean(scale * loss_value(loss, residual).sum(axis=1)))
    grad_mu = -(scale / n)[:, None] * loss_grad(loss, residual)
    return objective, policy.mean_net.backward(tape, grad_mu)


def policy_step(
    policy: PolicySnapshot, loss: RobustLoss, batch, batch_weights, optimizer: Optimizer
) -> Tuple[PolicySnapshot, float]:
    """One optimizer step on the weighted robust regression; returns the loss before the step."""
    objective, grads = policy_loss(policy, loss, batch.states, batch.actions, batch_weights)
    return policy.with_params(optimizer.step(policy.mean_net.params, grads)), objective


@dataclass(frozen=True, eq=False)
class EvaluationResult:
    """Per-episode returns of one evaluation."""

    discounted: np.ndarray
    undiscounted: np.ndarray

    @property
    def mean_return(self) -> float:
        return float(np.mean(self.undiscounted))

    @property
    def std_return(self) -> float:
        return population_std(self.undiscounted)

    @property
    def mean_discounted(self) -> float:
        return float(np.mean(self.discounted))


def evaluate_policy(
    policy: PolicySnapshot,
    task: Task,
    n_episodes: int,
    seed: int,
    horizon: int = 1000,
    gamma: float = 0.99,
    stochastic: bool = False,
) -> EvaluationResult:
    """
    Roll the policy out in ``task``.

    Mean actions are used unless ``stochastic`` is set, in which case actions
    are drawn from the policy distribution. Deterministic given ``seed``.

    Raises:
        DataValidationError: if ``n_episodes`` is below 1
    """
    if n_episodes < 1:
        raise DataValidationError("evaluation needs at least one episode")

    def act(states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        encoded = task.encode_states(states)
        vectors = policy.sample(encoded, rng) if stochastic else policy.mean(encoded)
        return task.decode_actions(vectors)

    discounted, undiscounted = simulate_returns(task, act, n_episodes, horizon, gamma, seed)
    return EvaluationResult(discounted, undiscounted)


def best_so_far_score(history: Sequence[float]) -> np.ndarray:
    """score_k = max(score_0..score_k); NaN entries are skipped."""
    scores = np.asarray(history, dtype=np.float64).reshape(-1)
    if scores.size == 0:
        return scores
    return np.fmax.accumulate(scores)
