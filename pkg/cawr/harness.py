# SPDX-License-Identifier: MIT
"""Experiment orchestration: datasets, seeds, aggregation and ablation grids."""
import csv
import itertools
import json
import logging
from datetime import datetime
from multiprocessing import Pool
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from cawr.config import config as runtime_config
from cawr.dataset_io import ingest_dataset
from cawr.enums import DistributionKind, LossKind, PriorityKind, TaskKind
from cawr.errors import ConfigurationError, TrainingAbortedError
from cawr.mdp import Dataset
from cawr.numerics import population_std
from cawr.schemas import ExperimentConfig, GeneratorSettings, canonical_dict, parse_config, save_config, with_updates
from cawr.scores import ScoreEntry
from cawr.tasks import (
    CorruptedBandit,
    GaussianPolicy,
    GridWorld,
    LinearQuadraticTask,
    MixtureBehavior,
    Task,
    generate_dataset,
)
from cawr.trainer import read_metrics, resolve_score, train_cawr

logger = logging.getLogger(__name__)

AGGREGATE_FILE = "aggregate.json"
SUMMARY_COLUMNS = ["loss", "priority", "status", "iteration", "mean_return", "std_return", "score", "score_std"]


def _task_kind(name: str) -> Optional[TaskKind]:
    try:
        return TaskKind(name.lower().split("-")[0])
    except ValueError:
        return None


def make_task(config: ExperimentConfig) -> Optional[Task]:
    """
    Environment for evaluation.

    Generated datasets use the generator's task parameters; file datasets
    get a default-parameter task when the task id names a known kind, and
    no task (returns are not evaluated) otherwise.
    """
    gen = config.dataset.generator
    if gen is not None:
        return task_from_generator(gen)
    kind = _task_kind(config.task)
    if kind is None:
        logger.warning("no simulator for task %r; returns will not be evaluated", config.task)
        return None
    return task_from_generator(GeneratorSettings(task=kind, epsilon=0.0, n_episodes=1))


def task_from_generator(gen: GeneratorSettings) -> Task:
    if gen.task == TaskKind.BANDIT:
        return CorruptedBandit(optimum=gen.optimum)
    if gen.task == TaskKind.LQR:
        return LinearQuadraticTask()
    return GridWorld(gen.grid_rows, gen.grid_cols, gen.slip, gen.gridworld_gamma)


def make_behavior(task: Task, gen: GeneratorSettings) -> MixtureBehavior:
    """(1 - epsilon) good + epsilon poor for the generator's task."""
    if gen.task == TaskKind.BANDIT:
        good = GaussianPolicy(offset=gen.good_mean, std=gen.action_std, name="bandit-good")
        poor = GaussianPolicy(offset=gen.poor_mean, std=gen.action_std, name="bandit-poor")
    elif gen.task == TaskKind.LQR:
        good = GaussianPolicy(gain=gen.good_gain, std=gen.action_std, name="lqr-good")
        poor = GaussianPolicy(gain=gen.poor_gain, std=gen.action_std, name="lqr-poor")
    else:
        if not isinstance(task, GridWorld):
            raise ConfigurationError("gridworld behavior needs a gridworld task")
        good = task.good_policy()
        poor = task.poor_policy(gen.poor_policy)
    return MixtureBehavior(good, poor, gen.epsilon)


def generate_from_settings(gen: GeneratorSettings) -> Tuple[Dataset, Task]:
    """Build the task and behavior and roll out a corrupted dataset."""
    task = task_from_generator(gen)
    behavior = make_behavior(task, gen)
    dataset = generate_dataset(task, behavior, gen.n_episodes, gen.horizon, gen.seed, gen.advantage_threshold)
    return dataset, task


def load_dataset(config: ExperimentConfig) -> Tuple[Dataset, Optional[Task]]:
    """The config's dataset with its evaluation task."""
    if config.dataset.generator is not None:
        return generate_from_settings(config.dataset.generator)
    return ingest_dataset(config.dataset.path), make_task(config)


def _run_seed(job: Tuple[Dict[str, Any], int, str]) -> Dict[str, Any]:
    """Train one seed into its own directory; used directly and by the worker pool."""
    data, seed, seed_dir = job
    cfg = parse_config(data)
    try:
        dataset, task = load_dataset(cfg)
        train_cawr(dataset, cfg, seed=seed, task=task, out_dir=seed_dir)
    except TrainingAbortedError as e:
        logger.warning("seed %d failed at iteration %d: %s", seed, e.iteration, e.diagnostic)
        return {"seed": seed, "status": "failed", "iteration": e.iteration, "error": e.diagnostic}
    return {"seed": seed, "status": "ok"}


def _mean_std(values: Sequence[float]) -> Tuple[Optional[float], Optional[float]]:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0 or not np.all(np.isfinite(arr)):
        return None, None
    return float(np.mean(arr)), population_std(arr)


def aggregate_runs(
    run_dir: Union[str, Path], config: ExperimentConfig, outcomes: List[Dict[str, Any]], score: Optional[ScoreEntry]
) -> Dict[str, Any]:
    """
    Recompute the across-seed statistics from the per-seed metrics CSVs.

    Only iterations present for every completed seed are aggregated. Std is
    the population standard deviation. Failed seeds are listed and mark the
    run failed; their partial CSVs stay on disk.
    """
    run_dir = Path(run_dir)
    completed = [o["seed"] for o in outcomes if o["status"] == "ok"]
    failed = [o for o in outcomes if o["status"] != "ok"]

    per_seed = {seed: read_metrics(run_dir / f"seed_{seed}" / "metrics.csv") for seed in completed}
    common = None
    for rows in per_seed.values():
        its = {row["iteration"] for row in rows}
        common = its if common is None else common & its

    checkpoints = []
    for iteration in sorted(common or ()):
        at = [next(row for row in rows if row["iteration"] == iteration) for rows in per_seed.values()]
        ret_mean, ret_std = _mean_std([row["mean_return"] for row in at])
        score_mean, score_std = _mean_std([row["score"] for row in at])
        best_mean, best_std = _mean_std([row["score_k"] for row in at])
        checkpoints.append({
            "iteration": iteration,
            "n_seeds": len(at),
            "mean_return": ret_mean,
            "std_return": ret_std,
            "score": score_mean,
            "score_std": score_std,
            "score_k": best_mean,
            "score_k_std": best_std,
        })

    report = {
        "task": config.task,
        "status": "failed" if failed else "ok",
        "seeds": list(config.seeds),
        "completed_seeds": completed,
        "failed_seeds": failed,
        "score_constants": None if score is None else {"j_random": score.j_random, "j_expert": score.j_expert},
        "reference_score": config.score.reference_score,
        "checkpoints": checkpoints,
        "final": checkpoints[-1] if checkpoints else None,
    }
    (run_dir / AGGREGATE_FILE).write_text(json.dumps(report, indent=2), encoding="utf-8")
    return report


def _default_run_dir(config: ExperimentConfig) -> Path:
    stamp = datetime.now().strftime("%Y%m%d-%H%M%S")
    return Path(runtime_config.RUNS_DIR) / f"{config.task}-{stamp}"


def run_experiment(
    config: ExperimentConfig, out_dir: Optional[Union[str, Path]] = None, workers: Optional[int] = None
) -> Path:
    """
    Train every configured seed and write the aggregate report.

    Layout: ``<out>/config.yaml``, ``<out>/seed_<k>/metrics.csv`` (plus
    checkpoints) and ``<out>/aggregate.json``. Seeds share nothing, so with
    ``workers > 1`` they run in a process pool.

    Args:
        config: validated experiment config
        out_dir: run directory, defaults to a timestamped directory under CAWR_RUNS_DIR
        workers: process count, defaults to the config's ``workers``

    Returns:
        the run directory
    """
    run_dir = Path(out_dir) if out_dir is not None else _default_run_dir(config)
    run_dir.mkdir(parents=True, exist_ok=True)
    save_config(config, run_dir / "config.yaml")
    workers = workers or config.workers

    data = canonical_dict(config)
    jobs = [(data, seed, str(run_dir / f"seed_{seed}")) for seed in config.seeds]
    logger.info("running %d seeds of %s into %s with %d workers", len(jobs), config.task, run_dir, workers)
    if workers > 1 and len(jobs) > 1:
        with Pool(processes=min(workers, len(jobs))) as pool:
            outcomes = pool.map(_run_seed, jobs)
    else:
        outcomes = [_run_seed(job) for job in jobs]

    task = make_task(config)
    report = aggregate_runs(run_dir, config, outcomes, resolve_score(config, task))
    if report["status"] != "ok":
        logger.warning("run %s finished with %d failed seeds", run_dir, len(report["failed_seeds"]))
    else:
        logger.info("run %s finished", run_dir)
    return run_dir


def _cell_name(loss: LossKind, priority: PriorityKind) -> str:
    return f"{loss.value}_{priority.value}"


def ablate(
    config: ExperimentConfig,
    losses: Sequence[Union[str, LossKind]],
    priorities: Sequence[Union[str, PriorityKind]],
    out_dir: Optional[Union[str, Path]] = None,
    workers: Optional[int] = None,
) -> Path:
    """
    Run the loss x priority grid, one run directory per cell.

    Writes ``summary.csv`` and ``summary.json`` with the final aggregate of
    every cell next to the cell directories.

    Raises:
        ConfigurationError: if a grid value is unknown or the grid is empty
    """
    try:
        loss_kinds = [LossKind(x) for x in losses]
        priority_kinds = [PriorityKind(x) for x in priorities]
    except ValueError as e:
        raise ConfigurationError(f"unknown ablation value: {e}") from e
    if not loss_kinds or not priority_kinds:
        raise ConfigurationError("ablation grid is empty")

    root = Path(out_dir) if out_dir is not None else _default_run_dir(config)
    root.mkdir(parents=True, exist_ok=True)
    rows = []
    for loss, priority in itertools.product(loss_kinds, priority_kinds):
        updates: Dict[str, Any] = {"loss": {"kind": loss.value}, "priority": {"kind": priority.value}}
        if loss != LossKind.L1 and config.distribution == DistributionKind.LAPLACE:
            updates["distribution"] = "gaussian"
        cell = with_updates(config, updates)
        cell_dir = run_experiment(cell, root / _cell_name(loss, priority), workers)
        report = json.loads((cell_dir / AGGREGATE_FILE).read_text(encoding="utf-8"))
        final = report["final"] or {}
        rows.append({
            "loss": loss.value,
            "priority": priority.value,
            "status": report["status"],
            "iteration": final.get("iteration"),
            "mean_return": final.get("mean_return"),
            "std_return": final.get("std_return"),
            "score": final.get("score"),
            "score_std": final.get("score_std"),
        })

    with (root / "summary.csv").open("w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=SUMMARY_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    (root / "summary.json").write_text(json.dumps({"task": config.task, "cells": rows}, indent=2), encoding="utf-8")
    logger.info("ablation over %d cells written to %s", len(rows), root)
    return root

