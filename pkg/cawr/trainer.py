# SPDX-License-Identifier: MIT
"""The CAWR training loop and its run artifacts."""
import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from cawr.approximator import load_checkpoint, make_network, make_optimizer, save_checkpoint
from cawr.discretize import ProductDiscretizer, UniformDiscretizer
from cawr.enums import TrainingMode
from cawr.errors import ConfigurationError, DataValidationError, TrainingAbortedError
from cawr.losses import RobustLoss, tighten_schedule
from cawr.mdp import Dataset, classify_explorations
from cawr.policy import (
    AdvantageWeight,
    PolicySnapshot,
    best_so_far_score,
    evaluate_policy,
    policy_step,
    weights,
)
from cawr.replay import AdvantageStats, PriorityScheme, ReplayBuffer
from cawr.schemas import ExperimentConfig, save_config
from cawr.scores import ScoreEntry, lookup_score, normalized_score
from cawr.tasks import Task
from cawr.value import (
    ValueSnapshot,
    advantage,
    begin_iteration,
    pretrain_values,
    q_loss_and_grad,
    soft_update,
    update_q,
    update_value,
    value_loss_and_grad,
)

logger = logging.getLogger(__name__)

METRIC_COLUMNS = [
    "iteration",
    "mean_return",
    "std_return",
    "score",
    "score_k",
    "value_loss",
    "q_loss",
    "policy_loss",
    "mean_weight",
    "priority_entropy",
]

Row = Dict[str, float]


@dataclass(eq=False)
class TrainingResult:
    """Final snapshots, metrics rows and the replay buffer of one run."""

    policy: PolicySnapshot
    values: ValueSnapshot
    metrics: List[Row]
    buffer: ReplayBuffer
    good_exploration_fraction: float = math.nan
    run_dir: Optional[Path] = None


def write_metrics(path: Union[str, Path], rows: List[Row]) -> Path:
    """Write metrics rows under the fixed header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=METRIC_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({key: row[key] for key in METRIC_COLUMNS})
    return path


def read_metrics(path: Union[str, Path]) -> List[Row]:
    """Read a metrics CSV written by ``write_metrics``."""
    path = Path(path)
    if not path.exists():
        raise DataValidationError(f"metrics file not found: {path}")
    with path.open(newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != METRIC_COLUMNS:
            raise DataValidationError(f"{path} does not have the metrics header")
        return [
            {key: (int(row[key]) if key == "iteration" else float(row[key])) for key in METRIC_COLUMNS}
            for row in reader
        ]


def build_discretizers(dataset: Dataset, config: ExperimentConfig, task: Optional[Task] = None):
    """State and action discretizers from the task, or covering the data."""
    state_disc = task.state_discretizer() if task is not None else None
    action_disc = task.action_discretizer() if task is not None else None
    if state_disc is None:
        state_disc = UniformDiscretizer.covering(
            np.vstack([dataset.states, dataset.next_states]), config.network.state_bins
        )
    if action_disc is None:
        action_disc = UniformDiscretizer.covering(dataset.actions, config.network.action_bins)
    return state_disc, action_disc


def build_snapshots(
    dataset: Dataset, config: ExperimentConfig, seed: int, task: Optional[Task] = None
) -> Tuple[ValueSnapshot, PolicySnapshot]:
    """Fresh Q, V and policy networks for one seed."""
    state_disc, action_disc = build_discretizers(dataset, config, task)
    s_dim, a_dim = dataset.state_dim, dataset.action_dim
    q = make_network(config.network, s_dim + a_dim, 1, seed, ProductDiscretizer([state_disc, action_disc]))
    v = make_network(config.network, s_dim, 1, seed + 1, state_disc)
    mean_net = make_network(config.network, s_dim, a_dim, seed + 2, state_disc)
    values = ValueSnapshot.initial(q, v, config.tau, config.soft_update, config.gamma)
    return values, PolicySnapshot(mean_net, config.sigma, config.distribution)


def build_loss(config: ExperimentConfig) -> RobustLoss:
    settings = config.loss
    return RobustLoss.for_sigma(settings.kind, config.sigma, settings.kappa, settings.c1, settings.c2, settings.c3)


def resolve_score(config: ExperimentConfig, task: Optional[Task] = None) -> Optional[ScoreEntry]:
    """Config constants, then the score table, then the task's own reference returns."""
    entry = lookup_score(config.task, config.score.j_random, config.score.j_expert)
    if entry is None and task is not None:
        j_random, j_expert = task.score_reference(config.eval_horizon)
        entry = ScoreEntry(j_random, j_expert)
    return entry


def _seed_streams(seed: int) -> Tuple[int, np.random.SeedSequence, int]:
    init_ss, replay_ss, eval_ss = np.random.SeedSequence(seed).spawn(3)
    return int(init_ss.generate_state(1)[0]), replay_ss, int(eval_ss.generate_state(1)[0])


def save_policy(path: Union[str, Path], policy: PolicySnapshot, extra: Optional[Dict] = None) -> Path:
    payload = {"sigma": policy.sigma, "distribution": policy.distribution_kind.value}
    payload.update(extra or {})
    return save_checkpoint(path, policy.mean_net, payload)


def load_policy(path: Union[str, Path]) -> PolicySnapshot:
    """Rebuild a policy saved by ``save_policy``."""
    net, extra = load_checkpoint(path)
    if "sigma" not in extra:
        raise ConfigurationError(f"{path} is not a policy checkpoint")
    return PolicySnapshot(net, float(extra["sigma"]), extra.get("distribution", "gaussian"))


def _write_artifacts(run_dir: Path, config: ExperimentConfig, metrics: List[Row], result=None, seed: int = 0):
    write_metrics(run_dir / "metrics.csv", metrics)
    save_config(config, run_dir / "config.yaml")
    if result is not None and config.checkpoint:
        iteration = metrics[-1]["iteration"] if metrics else 0
        save_policy(run_dir / "policy.json", result.policy, {"seed": seed, "iteration": iteration})
        save_checkpoint(run_dir / "q.json", result.values.q)
        save_checkpoint(run_dir / "v.json", result.values.v)


def train_cawr(
    dataset: Dataset,
    config: ExperimentConfig,
    seed: Optional[int] = None,
    task: Optional[Task] = None,
    out_dir: Optional[Union[str, Path]] = None,
) -> TrainingResult:
    """
    Run corruption-averse advantage-weighted regression.

    Each iteration freezes V_k, draws a uniform batch D1 and a prioritized
    batch D2, fits V and Q on D1, weights D2 by the clipped exponential
    advantage, takes one robust-regression policy step on D2 and overwrites
    the priorities of D1 and D2. The policy is evaluated at iteration 0,
    every ``eval_every`` iterations and at the end.

    Args:
        dataset: offline transitions
        config: validated experiment config
        seed: run seed, defaults to the first configured seed
        task: environment for evaluation; without one returns are NaN
        out_dir: where metrics, config and checkpoints are written

    Returns:
        the final snapshots and metrics

    Raises:
        TrainingAbortedError: on a non-finite loss or parameter, with the metrics so far
    """
    seed = config.seeds[0] if seed is None else int(seed)
    run_dir = Path(out_dir) if out_dir is not None else None
    init_seed, replay_seed, eval_seed = _seed_streams(seed)

    values, policy = build_snapshots(dataset, config, init_seed, task)
    if policy.action_dim != dataset.action_dim:
        raise ConfigurationError("policy output does not match the dataset action dimension")
    base_loss = build_loss(config)
    scheme = PriorityScheme.from_settings(config.priority, config.priority_lambda, config.priority_cap)
    buffer = ReplayBuffer(len(dataset), scheme, replay_seed, config.priority.stats_mode, config.priority.ema_decay)
    value_opt = make_optimizer(config.optimizer, config.value_lr)
    q_opt = make_optimizer(config.optimizer, config.q_lr)
    policy_opt = make_optimizer(config.optimizer, config.policy_lr)
    score_entry = resolve_score(config, task)
    n = config.batch_size
    total = config.iterations

    metrics: List[Row] = []
    good_fraction = math.nan

    def record(iteration: int, losses: Tuple[float, float, float], mean_weight: float) -> None:
        if task is not None:
            result = evaluate_policy(
                policy, task, config.eval_episodes, eval_seed, config.eval_horizon, config.gamma, config.eval_stochastic
            )
            mean_return, std_return = result.mean_return, result.std_return
        else:
            mean_return = std_return = math.nan
        score = normalized_score(mean_return, score_entry) if score_entry is not None else math.nan
        history = [row["score"] for row in metrics] + [score]
        metrics.append({
            "iteration": iteration,
            "mean_return": mean_return,
            "std_return": std_return,
            "score": score,
            "score_k": float(best_so_far_score(history)[-1]),
            "value_loss": losses[0],
            "q_loss": losses[1],
            "policy_loss": losses[2],
            "mean_weight": mean_weight,
            "priority_entropy": buffer.priority_entropy(),
        })
        logger.info(
            "seed %d iteration %d: return %.6g +- %.3g, score %.4g, good exploration %.3f",
            seed, iteration, mean_return, std_return, score, good_fraction,
        )

    logger.info("training seed %d for %d iterations on %d transitions", seed, total, len(dataset))
    record(0, (math.nan, math.nan, math.nan), math.nan)

    k = 0
    try:
        if config.mode == TrainingMode.PRETRAINED and config.pretrain_iterations > 0:
            values, _ = pretrain_values(
                values, dataset, config.pretrain_iterations, n, buffer.sample_uniform, value_opt, q_opt
            )
        for k in range(1, total + 1):
            values = begin_iteration(values)
            d1_idx = buffer.sample_uniform(n)
            d2_idx = buffer.sample_prioritized(n)
            d1 = dataset.batch(d1_idx)
            d2 = dataset.batch(d2_idx)

            if config.mode == TrainingMode.JOINT:
                values, v_loss = update_value(d1, values, value_opt)
                values, q_loss = update_q(d1, values, q_opt)
                values = soft_update(values)
            else:
                v_loss = value_loss_and_grad(d1, values)[0]
                q_loss = q_loss_and_grad(d1, values)[0]

            adv1 = advantage(values, d1.states, d1.actions)
            adv2 = advantage(values, d2.states, d2.actions)
            joint_adv = np.concatenate([adv1, adv2])
            if not np.all(np.isfinite(joint_adv)):
                raise TrainingAbortedError("non-finite advantage", k)
            stats = AdvantageStats.from_advantages(joint_adv, scheme.quantile_level)
            # weights cover D1 and D2; only the D2 slice drives the policy step
            joint_w = weights(AdvantageWeight.from_scheme(scheme, stats, config.lam, config.w_max), joint_adv)
            w2 = joint_w[adv1.shape[0]:]

            loss = base_loss
            if config.loss.tighten_rate > 0:
                loss = tighten_schedule(base_loss, k / total, config.loss.tighten_rate)
            policy, p_loss = policy_step(policy, loss, d2, w2, policy_opt)

            if scheme.enabled:
                buffer.update_priorities(np.concatenate([d1_idx, d2_idx]), joint_adv)
            if not all(math.isfinite(x) for x in (v_loss, q_loss, p_loss)):
                raise TrainingAbortedError(
                    f"non-finite loss (value={v_loss}, q={q_loss}, policy={p_loss})", k
                )
            if run_dir is not None and config.priority.histogram_every and k % config.priority.histogram_every == 0:
                buffer.dump_priority_histogram(run_dir / "priorities.csv", k, config.priority.histogram_bins)

            if k % config.eval_every == 0 or k == total:
                good_fraction = float(np.mean(classify_explorations(adv2, config.advantage_threshold)))
                record(k, (v_loss, q_loss, p_loss), float(np.mean(w2)))
    except TrainingAbortedError as e:
        logger.error("seed %d aborted at iteration %d: %s", seed, k, e.diagnostic)
        if run_dir is not None:
            _write_artifacts(run_dir, config, metrics)
        raise TrainingAbortedError(e.diagnostic, k, list(metrics)) from e

    result = TrainingResult(policy, values, metrics, buffer, good_fraction, run_dir)
    if run_dir is not None:
        _write_artifacts(run_dir, config, metrics, result, seed)
    logger.info("seed %d finished, final score %.4g", seed, metrics[-1]["score"])
    return result
