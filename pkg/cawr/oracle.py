# SPDX-License-Identifier: MIT
"""Exact and brute-force reference computations for the closed forms and bounds."""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp, rel_entr, softmax
from scipy.stats import norm

from cawr.enums import LossKind, PriorityKind
from cawr.errors import ConfigurationError, DataValidationError
from cawr.losses import RobustLoss, convex_radius, loss_curvature, loss_grad, loss_value
from cawr.mdp import TabularMDP, empirical_behavior, empirical_mdp, exact_advantage, policy_return
from cawr.replay import AdvantageStats, PriorityScheme, priorities
from cawr.tasks import GridWorld, MixtureBehavior, generate_dataset

logger = logging.getLogger(__name__)

ROW_SUM_TOLERANCE = 1e-12
QUADRATURE_NODES = 64
MAX_EXACT_PAIRS = 1000


# Closed-form policies
@dataclass(frozen=True, eq=False)
class DiscretePolicy:
    """Per-state probability vectors over a finite action set."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.atleast_2d(np.array(self.probs, dtype=np.float64, copy=True))
        if p.ndim != 2:
            raise DataValidationError("policy must be a vector or a (states, actions) table")
        if np.any(p < 0) or np.any(np.abs(p.sum(axis=1) - 1.0) > ROW_SUM_TOLERANCE):
            raise DataValidationError("policy rows must be probability vectors")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def n_states(self) -> int:
        return int(self.probs.shape[0])

    @property
    def n_actions(self) -> int:
        return int(self.probs.shape[1])

    def total_variation(self, other: "DiscretePolicy") -> float:
        """Largest per-state total variation distance."""
        return float(np.max(0.5 * np.abs(self.probs - other.probs).sum(axis=1)))


def _as_table(policy) -> np.ndarray:
    return policy.probs if isinstance(policy, DiscretePolicy) else np.atleast_2d(np.asarray(policy, dtype=np.float64))


def _normalized_rows(logits: np.ndarray) -> np.ndarray:
    probs = softmax(logits, axis=1)
    return probs / probs.sum(axis=1, keepdims=True)


def _check_lambda(lam: float) -> None:
    if not (lam > 0 and math.isfinite(lam)):
        raise ConfigurationError(f"lambda must be positive and finite, got {lam}")


def constrained_optimal_policy(pi_beta, advantages, lam: float) -> DiscretePolicy:
    """
    pi*_beta(a|s) = pi_beta(a|s) exp(A(s,a) / lam) / Z(s).

    Computed in log space with the row maximum subtracted. Actions with zero
    behavior probability get zero mass whatever their advantage.
    """
    _check_lambda(lam)
    pb = _as_table(pi_beta)
    adv = np.atleast_2d(np.asarray(advantages, dtype=np.float64))
    if adv.shape != pb.shape:
        raise DataValidationError(f"advantages have shape {adv.shape}, policy {pb.shape}")
    support = pb > 0
    if np.any(~np.isfinite(adv[support])):
        raise DataValidationError("advantages must be finite where the behavior policy has mass")
    with np.errstate(divide="ignore"):
        logits = np.where(support, np.log(pb) + np.where(support, adv, 0.0) / lam, -np.inf)
    return DiscretePolicy(_normalized_rows(logits))


def unbiased_optimal_policy(advantages, lam: float) -> DiscretePolicy:
    """pi*(a|s) = exp(A(s,a) / lam) / sum_a' exp(A(s,a') / lam)."""
    _check_lambda(lam)
    adv = np.atleast_2d(np.asarray(advantages, dtype=np.float64))
    if not np.all(np.isfinite(adv)):
        raise DataValidationError("advantages must be finite")
    return DiscretePolicy(_normalized_rows(adv / lam))


def lagrangian_objective(pi, pi_beta, advantages, lam: float) -> np.ndarray:
    """sum_a pi A - lam KL(pi || pi_beta) for each row of candidate distributions."""
    pi = np.atleast_2d(pi)
    return pi @ np.asarray(advantages, dtype=np.float64) - lam * rel_entr(pi, np.asarray(pi_beta)).sum(axis=1)


def lagrangian_grid_argmax(pi_beta, advantages, lam: float, resolution: int = 100, rounds: int = 5) -> np.ndarray:
    """
    Maximize the KL-regularized objective over a 2- or 3-action simplex by grid search.

    Each round grids the free coordinates of the current box, keeps the best
    feasible point and shrinks the box to two cells around it.
    """
    _check_lambda(lam)
    pb = np.asarray(pi_beta, dtype=np.float64).reshape(-1)
    adv = np.asarray(advantages, dtype=np.float64).reshape(-1)
    k = pb.size
    if k not in (2, 3) or adv.size != k:
        raise ConfigurationError("grid search supports 2 or 3 actions")
    lo = np.zeros(k - 1)
    hi = np.ones(k - 1)
    best = pb
    for _ in range(rounds):
        axes = [np.linspace(l, h, resolution + 1) for l, h in zip(lo, hi)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, k - 1)
        last = 1.0 - mesh.sum(axis=1)
        feasible = last >= -1e-15
        candidates = np.column_stack([mesh[feasible], np.maximum(last[feasible], 0.0)])
        best = candidates[np.argmax(lagrangian_objective(candidates, pb, adv, lam))]
        step = (hi - lo) / resolution
        lo = np.maximum(best[:-1] - 2.0 * step, 0.0)
        hi = np.minimum(best[:-1] + 2.0 * step, 1.0)
    return best / best.sum()


# KL lower bound
@dataclass(frozen=True)
class KLBoundReport:
    lhs: float
    rhs: float
    margin: float
    holds: bool


def check_kl_lower_bound(pi_beta, advantages, lam: float) -> KLBoundReport:
    """
    Check D_KL(pi* || pi*_beta) >= H(pi*, pi_beta) - H(pi_beta, pi*) for one state.

    A behavior policy with zero entries makes both sides infinite; that case
    is reported as holding.
    """
    _check_lambda(lam)
    pb = np.asarray(pi_beta, dtype=np.float64).reshape(-1)
    adv = np.asarray(advantages, dtype=np.float64).reshape(-1)
    if pb.shape != adv.shape:
        raise DataValidationError("pi_beta and advantages must have the same length")
    DiscretePolicy(pb)  # validates the row
    scaled = adv / lam
    log_pi_star = scaled - logsumexp(scaled)
    pi_star = np.exp(log_pi_star)
    if np.any(pb == 0):
        return KLBoundReport(math.inf, math.inf, math.inf, True)
    log_pb = np.log(pb)
    log_pi_beta_star = log_pb + scaled - logsumexp(log_pb + scaled)
    lhs = float(np.sum(pi_star * (log_pi_star - log_pi_beta_star)))
    rhs = float(-np.sum(pi_star * log_pb) + np.sum(pb * log_pi_star))
    margin = lhs - rhs
    scale = max(1.0, abs(lhs), abs(rhs))
    return KLBoundReport(lhs, rhs, margin, margin >= -1e-12 * scale)


# Bias bound on a one-dimensional action mixture
@dataclass(frozen=True)
class ActionComponent:
    """N(mean, std^2) over a scalar action; std = 0 is a point mass."""

    mean: float
    std: float = 0.0

    def __post_init__(self):
        if self.std < 0 or not math.isfinite(self.std) or not math.isfinite(self.mean):
            raise ConfigurationError("component mean must be finite and std non-negative")

    def nodes(self, n: int = QUADRATURE_NODES) -> Tuple[np.ndarray, np.ndarray]:
        """Gauss-Hermite points and probabilities; a point mass has one node."""
        if self.std == 0.0:
            return np.array([self.mean]), np.array([1.0])
        x, w = hermegauss(n)
        return self.mean + self.std * x, w / math.sqrt(2.0 * math.pi)

    def expected_abs(self, mu: np.ndarray) -> np.ndarray:
        """E|a - mu| in closed form."""
        d = self.mean - np.asarray(mu, dtype=np.float64)
        if self.std == 0.0:
            return np.abs(d)
        s = self.std
        return s * math.sqrt(2.0 / math.pi) * np.exp(-(d ** 2) / (2.0 * s * s)) + d * (1.0 - 2.0 * norm.cdf(-d / s))

    def expected_loss(self, loss: RobustLoss, mu: np.ndarray) -> np.ndarray:
        """E f(a - mu); closed forms for L1 and L2, quadrature otherwise."""
        mu = np.asarray(mu, dtype=np.float64)
        if loss.kind == LossKind.L2:
            return (self.mean - mu) ** 2 + self.std ** 2
        if loss.kind == LossKind.L1:
            return self.expected_abs(mu)
        points, probs = self.nodes()
        return loss_value(loss, points[None, :] - mu.reshape(-1, 1)) @ probs


@dataclass(frozen=True)
class BiasReport:
    """Measured bias |mu* - mu+| against the bound."""

    loss: str
    epsilon: float
    mu_star: float
    mu_plus: float
    bias: float
    bound: float
    l2_bound: float
    holds: Optional[bool]
    applicable: bool
    unimodal: bool
    minima: Tuple[float, ...] = field(default_factory=tuple)


def _local_minima(grid: np.ndarray, values: np.ndarray) -> List[int]:
    """Indices of separated local minima; plateaus and rounding ripples count once."""
    n = values.size
    if n == 1:
        return [0]
    left = np.concatenate([[np.inf], values[:-1]])
    right = np.concatenate([values[1:], [np.inf]])
    candidates = np.flatnonzero((values <= left) & (values <= right))
    tol = 1e-9 * (1.0 + np.max(np.abs(values[np.isfinite(values)])))
    merged: List[int] = []
    for i in candidates:
        if merged:
            j = merged[-1]
            if np.max(values[j:i + 1]) - max(values[i], values[j]) <= tol:
                if values[i] < values[j]:
                    merged[-1] = i
                continue
        merged.append(int(i))
    return merged


def _minimize_1d(
    objective: Callable[[np.ndarray], np.ndarray], lo: float, hi: float, candidates: np.ndarray, points: int
) -> Tuple[float, List[float]]:
    """Global minimum by grid, local-minimum detection and bounded Brent refinement."""
    grid = np.union1d(np.linspace(lo, hi, points), candidates[(candidates >= lo) & (candidates <= hi)])
    values = objective(grid)
    minima = _local_minima(grid, values)
    refined: List[Tuple[float, float]] = []
    for i in minima:
        a, b = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
        best_x, best_v = float(grid[i]), float(values[i])
        if b > a:
            res = minimize_scalar(
                lambda x: float(objective(np.array([x]))[0]),
                bounds=(a, b),
                method="bounded",
                options={"xatol": 1e-10},
            )
            if res.fun < best_v:
                best_x, best_v = float(res.x), float(res.fun)
        refined.append((best_v, best_x))
    refined.sort()
    return refined[0][1], [x for _, x in refined]


def check_bias_bound(
    epsilon: float,
    good: ActionComponent,
    poor: ActionComponent,
    loss: RobustLoss,
    weights: Tuple[float, float] = (1.0, 1.0),
    grid_points: int = 2001,
) -> BiasReport:
    """
    Measure the bias of the weighted robust-regression minimizer on a 1-D mixture.

    mu* minimizes (1 - eps) w+ E+ f(a - mu) + eps w- E- f(a - mu) and mu+
    minimizes the good-only objective. The bound is
    eps E-[w |f'(a - mu+)|] / min_xi E_D[w f''(a - xi)] with xi between mu+
    and mu*; for L2 it equals eps E-[w |a - mu+|] / E_D[w]. Flat and Skew
    are not applicable when the action support leaves their convex region.

    Args:
        epsilon: mass of the poor component
        good: pi+ component
        poor: pi- component
        loss: regression loss f
        weights: (w+, w-) advantage weights of the two components
        grid_points: resolution of the global grid search

    Returns:
        the measured bias, both bounds and diagnostics
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ConfigurationError(f"epsilon must be in [0, 1], got {epsilon}")
    w_plus, w_minus = (float(w) for w in weights)
    if w_plus <= 0 or w_minus <= 0:
        raise ConfigurationError("weights must be positive")
    mass_plus = (1.0 - epsilon) * w_plus
    mass_minus = epsilon * w_minus
    expected_w = mass_plus + mass_minus

    def mixture(mu):
        return mass_plus * good.expected_loss(loss, mu) + mass_minus * poor.expected_loss(loss, mu)

    def good_only(mu):
        # same term layout as the mixture so eps = 0 reproduces it exactly
        return mass_plus * good.expected_loss(loss, mu) + 0.0 * poor.expected_loss(loss, mu)

    if loss.kind == LossKind.L2:
        mu_star = (mass_plus * good.mean + mass_minus * poor.mean) / expected_w
        mu_plus = good.mean
        minima = [mu_star]
        unimodal = True
    else:
        spread = 8.0 * max(good.std, poor.std)
        lo = min(good.mean, poor.mean) - spread
        hi = max(good.mean, poor.mean) + spread
        candidates = np.array([good.mean, poor.mean])
        mu_star, minima = _minimize_1d(mixture, lo, hi, candidates, grid_points)
        if epsilon == 0.0:
            mu_plus = mu_star
        else:
            mu_plus, _ = _minimize_1d(good_only, lo, hi, candidates, grid_points)
        unimodal = len(minima) == 1

    bias = abs(mu_star - mu_plus)
    l2_bound = epsilon * w_minus * float(poor.expected_abs(np.array([mu_plus]))[0]) / expected_w

    radius = convex_radius(loss)
    g_points, g_probs = good.nodes()
    p_points, p_probs = poor.nodes()
    support = np.concatenate([g_points[g_probs > 1e-10], p_points[p_probs > 1e-10]])
    reach = float(np.max(np.abs(support - mu_plus)))
    applicable = reach < radius
    if not applicable:
        logger.warning(
            "bias bound not applicable: support reaches %.4g from mu+, %s convex radius is %.4g",
            reach, loss.kind.value, radius,
        )
        return BiasReport(loss.kind.value, epsilon, mu_star, mu_plus, bias, math.nan, l2_bound,
                          None, False, unimodal, tuple(minima))

    if loss.kind == LossKind.L2:
        bound = l2_bound
    else:
        numerator = epsilon * w_minus * float(np.abs(loss_grad(loss, p_points - mu_plus)) @ p_probs)
        xi = np.linspace(min(mu_star, mu_plus), max(mu_star, mu_plus), 201)
        curvature = (
            mass_plus * (loss_curvature(loss, g_points[None, :] - xi[:, None]) @ g_probs)
            + mass_minus * (loss_curvature(loss, p_points[None, :] - xi[:, None]) @ p_probs)
        )
        denominator = float(np.min(curvature))
        bound = numerator / denominator if denominator > 0 else math.inf
    holds = bias <= bound * (1.0 + 1e-9) + 1e-12
    return BiasReport(loss.kind.value, epsilon, mu_star, mu_plus, bias, bound, l2_bound,
                      bool(holds), True, unimodal, tuple(minima))


# Gaussian likelihood and weighted regression
@dataclass(frozen=True)
class LikelihoodReport:
    max_gap: float
    holds: bool


def check_gaussian_regression(sigma: float, actions, means, weights, step: float = 1e-4) -> LikelihoodReport:
    """
    Check that -w log N(a; mu, sigma^2) and w |a - mu|^2 / (2 sigma^2) differ by a mu-free constant.

    The difference is differentiated in mu by central differences; its
    gradient must vanish to 1e-10 relative to the size of the terms.
    """
    if sigma <= 0:
        raise ConfigurationError("sigma must be positive")
    a = np.atleast_2d(np.asarray(actions, dtype=np.float64))
    mu = np.atleast_2d(np.asarray(means, dtype=np.float64))
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if a.shape != mu.shape or w.shape[0] != a.shape[0]:
        raise DataValidationError("actions, means and weights do not line up")

    def gap(m: np.ndarray) -> np.ndarray:
        nll = -w * norm.logpdf(a, loc=m, scale=sigma).sum(axis=1)
        regression = w * ((a - m) ** 2).sum(axis=1) / (2.0 * sigma ** 2)
        return nll - regression

    worst = 0.0
    for j in range(a.shape[1]):
        shift = np.zeros_like(mu)
        shift[:, j] = step
        derivative = (gap(mu + shift) - gap(mu - shift)) / (2.0 * step)
        scale = 1.0 + np.abs(w) * (1.0 + ((a - mu) ** 2).sum(axis=1) / sigma ** 2 + abs(math.log(sigma)))
        worst = max(worst, float(np.max(np.abs(derivative) / scale)))
    return LikelihoodReport(worst, worst <= 1e-10)


# Reweighted behavior policy on a finite MDP
@dataclass(frozen=True)
class ReweightingCell:
    scheme: str
    lam: float
    j_reweighted: float
    j_behavior: float


@dataclass(frozen=True)
class ReweightingReport:
    """Equivalence of the two constraint forms and the best-return comparison."""

    max_tv: float
    forms_agree: bool
    best_behavior: float
    best_reweighted: float
    margin: float
    improves: bool
    absent_pairs: int
    cells: Tuple[ReweightingCell, ...]


def _scheme_label(scheme: PriorityScheme) -> str:
    return "constant" if scheme.kind in (PriorityKind.NONE, PriorityKind.CONSTANT) else scheme.kind.value


def check_reweighted_constraint(
    mdp: TabularMDP,
    pi_beta,
    schemes: Sequence[PriorityScheme],
    lam_grid: Sequence[float],
) -> ReweightingReport:
    """
    Compare constraining to pi_re = pi_beta h(A) / norm with constraining to pi_beta.

    For each scheme and lambda the optimizer against pi_re is compared to the
    optimizer against pi_beta with advantages A + lam log h. Returns are
    exact; h = 1 is always included.

    Raises:
        ConfigurationError: if |S| |A| exceeds the exact-solve limit
    """
    if mdp.n_states * mdp.n_actions > MAX_EXACT_PAIRS:
        raise ConfigurationError(f"|S||A| = {mdp.n_states * mdp.n_actions} is above {MAX_EXACT_PAIRS}")
    if not lam_grid:
        raise ConfigurationError("lambda grid is empty")
    pb = _as_table(pi_beta)
    pb = np.where(mdp.observed, pb, 0.0)
    supported = mdp.observed.any(axis=1)
    rows = pb.sum(axis=1, keepdims=True)
    uniform = np.full_like(pb, 1.0 / mdp.n_actions)
    pb = np.where(supported[:, None], pb / np.where(rows > 0, rows, 1.0), uniform)
    absent = int((~mdp.observed[supported]).sum())

    adv = exact_advantage(mdp, pb)
    adv_filled = np.where(mdp.observed, adv, 0.0)
    observed_adv = adv[mdp.observed]
    stats = AdvantageStats.from_advantages(observed_adv)

    all_schemes = [PriorityScheme(PriorityKind.CONSTANT)] + [
        s for s in schemes if s.kind not in (PriorityKind.NONE, PriorityKind.CONSTANT)
    ]
    best_behavior = max(policy_return(mdp, constrained_optimal_policy(pb, adv_filled, lam).probs) for lam in lam_grid)

    cells: List[ReweightingCell] = []
    max_tv = 0.0
    best_reweighted = -math.inf
    for scheme in all_schemes:
        h = np.ones_like(pb)
        h[mdp.observed] = priorities(scheme, observed_adv, stats)
        pi_re = pb * h
        norm_re = pi_re.sum(axis=1, keepdims=True)
        pi_re = np.where(supported[:, None], pi_re / np.where(norm_re > 0, norm_re, 1.0), uniform)
        log_h = np.where(mdp.observed, np.log(h), 0.0)
        for lam in lam_grid:
            direct = constrained_optimal_policy(pi_re, adv_filled, lam)
            shifted = constrained_optimal_policy(pb, adv_filled + lam * log_h, lam)
            max_tv = max(max_tv, direct.total_variation(shifted))
            j_re = policy_return(mdp, direct.probs)
            j_beta = policy_return(mdp, constrained_optimal_policy(pb, adv_filled, lam).probs)
            best_reweighted = max(best_reweighted, j_re)
            cells.append(ReweightingCell(_scheme_label(scheme), float(lam), j_re, j_beta))

    margin = best_reweighted - best_behavior
    return ReweightingReport(
        max_tv=max_tv,
        forms_agree=max_tv <= 1e-8,
        best_behavior=best_behavior,
        best_reweighted=best_reweighted,
        margin=margin,
        improves=margin >= -1e-9,
        absent_pairs=absent,
        cells=tuple(cells),
    )


def check_reweighted_constraint_on_dataset(
    dataset,
    state_discretizer,
    action_discretizer,
    schemes: Sequence[PriorityScheme],
    lam_grid: Sequence[float],
    gamma: float = 0.9,
) -> ReweightingReport:
    """Run ``check_reweighted_constraint`` on the empirical MDP and behavior of a dataset."""
    mdp = empirical_mdp(dataset, state_discretizer, action_discretizer, gamma)
    pi_beta = empirical_behavior(dataset, state_discretizer, action_discretizer)
    return check_reweighted_constraint(mdp, pi_beta, schemes, lam_grid)


# Suite
def _section(name: str, passed: bool, **details: Any) -> Dict[str, Any]:
    return {"name": name, "passed": bool(passed), **details}


def run_theorem_suite(seed: int = 0, scale: float = 1.0) -> Dict[str, Any]:
    """
    Run every oracle check on random instances and collect a JSON-ready report.

    ``scale`` multiplies the instance counts (1.0 gives 100 closed-form,
    1 000 KL, 1 000 bias, 10 000 likelihood and 20 gridworld instances).
    """
    rng = np.random.default_rng(seed)

    def count(n: int) -> int:
        return max(1, int(round(n * scale)))

    sections = []

    worst_tv = 0.0
    for _ in range(count(100)):
        k = int(rng.integers(2, 4))
        pb = rng.dirichlet(np.ones(k))
        adv = rng.normal(size=k)
        lam = float(rng.choice([0.2, 1.0, 5.0]))
        closed = constrained_optimal_policy(pb, adv, lam).probs[0]
        grid = lagrangian_grid_argmax(pb, adv, lam)
        worst_tv = max(worst_tv, 0.5 * float(np.abs(closed - grid).sum()))
    sections.append(_section("closed_form_vs_grid", worst_tv <= 1e-3, max_tv=worst_tv))

    worst_margin = math.inf
    for _ in range(count(1000)):
        k = int(rng.integers(2, 9))
        report = check_kl_lower_bound(rng.dirichlet(np.ones(k)), rng.normal(size=k), float(rng.choice([0.2, 1.0, 5.0])))
        worst_margin = min(worst_margin, report.margin if report.holds else -math.inf)
    degeneracy = [check_kl_lower_bound([e, 1.0 - e], [1.0, -1.0], 1.0).lhs for e in 10.0 ** -np.arange(1, 7)]
    monotone = bool(np.all(np.diff(degeneracy) > 0))
    sections.append(_section("kl_lower_bound", worst_margin >= 0 and monotone,
                             min_margin=worst_margin, degeneracy_lhs=degeneracy))

    bias_ok = True
    robust_ok = True
    l1_loss = RobustLoss.l1()
    l2_loss = RobustLoss.l2()
    flat_loss = RobustLoss.for_sigma(LossKind.FLAT, 1.0)
    for _ in range(count(1000)):
        eps = float(rng.uniform(0.0, 0.4))
        good_mean = float(rng.uniform(-1.0, 1.0))
        sep = float(rng.uniform(2.0, 4.0))
        good = ActionComponent(good_mean, float(rng.uniform(0.05, 0.3)))
        poor = ActionComponent(good_mean - sep, float(rng.uniform(0.05, 0.3)))
        w = (float(rng.uniform(1.0, 2.0)), float(rng.uniform(0.5, 1.0)))
        l2 = check_bias_bound(eps, good, poor, l2_loss, w)
        bias_ok &= bool(l2.holds)
        for other in (l1_loss, flat_loss):
            report = check_bias_bound(eps, good, poor, other, w)
            if report.unimodal:
                robust_ok &= report.bias <= l2.bias + 1e-9
    delta = check_bias_bound(0.25, ActionComponent(1.0), ActionComponent(-1.0), l2_loss)
    sections.append(_section("bias_bound", bias_ok and robust_ok and delta.bias == delta.bound == 0.5,
                             l2_bound_holds=bias_ok, robust_not_worse=robust_ok,
                             point_mass_bias=delta.bias, point_mass_bound=delta.bound))

    n = count(10000)
    sigma = float(np.exp(rng.uniform(-3.0, 1.0)))
    likelihood = check_gaussian_regression(
        sigma, rng.normal(size=(n, 2)), rng.normal(size=(n, 2)), rng.uniform(0.1, 10.0, size=n)
    )
    sections.append(_section("gaussian_regression_equivalence", likelihood.holds, max_gap=likelihood.max_gap))

    worst_tv = 0.0
    worst_margin = math.inf
    schemes = [PriorityScheme(PriorityKind.EXP_STANDARD, lam=1.0), PriorityScheme(PriorityKind.EXP_NORMAL, lam=1.0)]
    for i in range(count(20)):
        world = GridWorld(rows=1, cols=5, slip=float(rng.uniform(0.0, 0.3)), gamma=0.9)
        behavior = MixtureBehavior(world.good_policy(), world.poor_policy("uniform"), float(rng.uniform(0.1, 0.9)))
        data = generate_dataset(world, behavior, 100, 20, seed=seed * 1000 + i)
        report = check_reweighted_constraint_on_dataset(
            data, world.state_discretizer(), world.action_discretizer(), schemes, [0.1, 0.3, 1.0, 3.0]
        )
        worst_tv = max(worst_tv, report.max_tv)
        worst_margin = min(worst_margin, report.margin)
    sections.append(_section("reweighted_constraint", worst_tv <= 1e-8 and worst_margin >= -1e-9,
                             max_tv=worst_tv, min_margin=worst_margin))

    passed = all(s["passed"] for s in sections)
    logger.info("theorem suite %s (%d sections)", "passed" if passed else "FAILED", len(sections))
    return {"seed": seed, "scale": scale, "passed": passed, "sections": sections}
