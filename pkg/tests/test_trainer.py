# SPDX-License-Identifier: MIT
"""Training loop, metrics and run artifact tests."""
import math

import numpy as np
import pytest

from cawr.errors import DataValidationError, TrainingAbortedError
from cawr.harness import load_dataset
from cawr.schemas import load_config, parse_config
from cawr.trainer import METRIC_COLUMNS, load_policy, read_metrics, train_cawr, write_metrics


def _train(config, out_dir=None, seed=None):
    dataset, task = load_dataset(config)
    return train_cawr(dataset, config, seed=seed, task=task, out_dir=out_dir)


def _assert_same_metrics(first, second):
    assert len(first) == len(second)
    for a, b in zip(first, second):
        for key in METRIC_COLUMNS:
            np.testing.assert_array_equal(a[key], b[key])


def test_zero_iterations_return_initial_policy(make_config):
    """Test that N = 0 only records the initial evaluation."""
    result = _train(make_config(iterations=0))
    assert result.policy.mean_net.params.version == 0
    assert not np.any(result.policy.mean_net.params.values)
    assert [row["iteration"] for row in result.metrics] == [0]
    assert math.isnan(result.metrics[0]["policy_loss"])


def test_metrics_follow_eval_cadence(make_config):
    """Test rows at 0, every eval_every iterations and the end."""
    result = _train(make_config(iterations=25, eval_every=10))
    assert [row["iteration"] for row in result.metrics] == [0, 10, 20, 25]
    scores = [row["score"] for row in result.metrics]
    np.testing.assert_array_equal([row["score_k"] for row in result.metrics], np.maximum.accumulate(scores))
    for row in result.metrics[1:]:
        assert all(math.isfinite(row[key]) for key in METRIC_COLUMNS)
        assert row["mean_weight"] > 0.0
    assert result.metrics[1]["priority_entropy"] == pytest.approx(math.log(200))


def test_same_seed_gives_identical_metrics_files(make_config, tmp_path):
    """Test that metrics files are byte-identical across repeated runs."""
    config = make_config(priority={"kind": "normal"})
    _train(config, tmp_path / "a")
    _train(config, tmp_path / "b")
    first = (tmp_path / "a" / "metrics.csv").read_text()
    assert first == (tmp_path / "b" / "metrics.csv").read_text()


def test_other_seed_changes_the_run(make_config):
    """Test that the seed drives the replay streams."""
    config = make_config()
    first = _train(config, seed=0)
    second = _train(config, seed=1)
    assert [row["value_loss"] for row in first.metrics[1:]] != [row["value_loss"] for row in second.metrics[1:]]


def test_constant_priorities_reduce_to_uniform_sampling(make_config):
    """Test that h = 1 reproduces the no-PER run exactly."""
    plain = _train(make_config(priority={"kind": "none"}))
    constant = _train(make_config(priority={"kind": "constant"}))
    _assert_same_metrics(plain.metrics, constant.metrics)
    np.testing.assert_array_equal(plain.policy.mean_net.params.values, constant.policy.mean_net.params.values)
    np.testing.assert_array_equal(plain.values.q.params.values, constant.values.q.params.values)


@pytest.mark.parametrize("loss", ["l1", "huber", "flat", "skew"])
@pytest.mark.parametrize("priority", ["standard", "quantile", "odpr", "aw"])
def test_every_loss_and_priority_trains(make_config, loss, priority):
    """Test that each loss and priority combination runs to completion."""
    result = _train(make_config(loss={"kind": loss}, priority={"kind": priority}, iterations=10))
    assert result.metrics[-1]["iteration"] == 10
    assert math.isfinite(result.metrics[-1]["policy_loss"])
    assert np.all(result.buffer.priorities > 0.0)


def test_run_artifacts(make_config, tmp_path):
    """Test metrics, config and checkpoints written into the run directory."""
    config = make_config()
    result = _train(config, tmp_path)
    for name in ["metrics.csv", "config.yaml", "policy.json", "q.json", "v.json"]:
        assert (tmp_path / name).exists()
    rows = read_metrics(tmp_path / "metrics.csv")
    _assert_same_metrics(rows, result.metrics)
    assert load_config(tmp_path / "config.yaml") == config
    policy = load_policy(tmp_path / "policy.json")
    assert policy.sigma == config.sigma
    np.testing.assert_array_equal(policy.mean(np.zeros((1, 1))), result.policy.mean(np.zeros((1, 1))))


def test_checkpoints_can_be_disabled(make_config, tmp_path):
    """Test that checkpoint: false writes only metrics and config."""
    _train(make_config(checkpoint=False), tmp_path)
    assert (tmp_path / "metrics.csv").exists()
    assert not (tmp_path / "policy.json").exists()


def test_priority_histograms_are_appended(make_config, tmp_path):
    """Test the periodic priority histogram dump."""
    _train(make_config(priority={"kind": "normal", "histogram_every": 5, "histogram_bins": 4}), tmp_path)
    lines = (tmp_path / "priorities.csv").read_text().strip().splitlines()
    assert lines[0] == "iteration,log10_low,log10_high,count"
    assert len(lines) == 1 + 4 * 4


def test_metrics_file_errors(tmp_path):
    """Test missing files and foreign headers."""
    with pytest.raises(DataValidationError):
        read_metrics(tmp_path / "missing.csv")
    bad = tmp_path / "bad.csv"
    bad.write_text("iteration,score\n0,1.0\n")
    with pytest.raises(DataValidationError):
        read_metrics(bad)
    path = write_metrics(tmp_path / "nested" / "metrics.csv", [])
    assert path.read_text().strip() == ",".join(METRIC_COLUMNS)


def test_divergence_aborts_with_partial_metrics(make_config, tmp_path):
    """Test that exploding value updates stop the run and keep earlier rows."""
    config = make_config(value_lr=1e6, q_lr=1e6, iterations=500, eval_every=10)
    with pytest.raises(TrainingAbortedError) as excinfo:
        _train(config, tmp_path)
    error = excinfo.value
    assert error.iteration >= 1
    assert error.partial_metrics[0]["iteration"] == 0
    assert all(row["iteration"] < error.iteration for row in error.partial_metrics)
    assert len(read_metrics(tmp_path / "metrics.csv")) == len(error.partial_metrics)
    assert not (tmp_path / "policy.json").exists()


def test_pretrained_values_stay_fixed(make_config):
    """Test that the pretrained mode only moves the policy in the main loop."""
    short = _train(make_config(mode="pretrained", pretrain_iterations=30, iterations=5))
    long = _train(make_config(mode="pretrained", pretrain_iterations=30, iterations=15))
    np.testing.assert_array_equal(short.values.q.params.values, long.values.q.params.values)
    np.testing.assert_array_equal(short.values.v.params.values, long.values.v.params.values)
    assert long.policy.mean_net.params.version == 15


def test_gridworld_run_completes(config_data):
    """Test a small tabular gridworld experiment end to end."""
    data = config_data(
        task="gridworld",
        dataset={"generator": {
            "task": "gridworld", "epsilon": 0.5, "n_episodes": 20, "horizon": 30,
            "grid_rows": 3, "grid_cols": 3, "seed": 1,
        }},
        gamma=0.9,
        eval_horizon=30,
        iterations=10,
    )
    result = _train(parse_config(data))
    final = result.metrics[-1]
    assert final["iteration"] == 10
    assert math.isfinite(final["score"])
    assert 0.0 <= result.good_exploration_fraction <= 1.0
    assert result.policy.action_dim == 2


DIRECTIONAL_GENERATORS = {
    "bandit": {"task": "bandit", "epsilon": 0.9, "n_episodes": 2000, "action_std": 0.1, "seed": 3},
    "gridworld": {
        "task": "gridworld", "epsilon": 0.5, "n_episodes": 200, "horizon": 30,
        "grid_rows": 5, "grid_cols": 5, "poor_policy": "uniform", "seed": 1,
    },
}


def _directional_config(task, loss, priority):
    data = {
        "task": task,
        "dataset": {"generator": DIRECTIONAL_GENERATORS[task]},
        "network": {"kind": "tabular", "state_bins": 1},
        "optimizer": {"kind": "adam"},
        "loss": {"kind": loss},
        "priority": {"kind": priority},
        "mode": "joint",
        "iterations": 1000,
        "eval_every": 1000,
        "eval_episodes": 1 if task == "bandit" else 50,
        "eval_horizon": 1 if task == "bandit" else 30,
        "gamma": 0.99 if task == "bandit" else 0.9,
        "batch_size": 256,
        "value_lr": 0.05,
        "q_lr": 0.05,
        "policy_lr": 0.005,
        "soft_update": 0.1,
        "seeds": [0, 1, 2],
        "checkpoint": False,
        "lambda": 1.0,
    }
    return parse_config(data)


@pytest.fixture(scope="module")
def directional_runs():
    """Final (score, mean action) per seed, trained once per configuration."""
    cache = {}

    def run(task, loss, priority):
        key = (task, loss, priority)
        if key not in cache:
            config = _directional_config(task, loss, priority)
            dataset, env = load_dataset(config)
            start = env.encode_states(env.reset(1, np.random.default_rng(0)))
            outcomes = []
            for seed in config.seeds:
                result = train_cawr(dataset, config, seed=seed, task=env)
                outcomes.append((result.metrics[-1]["score"], result.policy.mean(start)[0]))
            cache[key] = outcomes
        return cache[key]

    return run


def _scores(outcomes):
    return [score for score, _ in outcomes]


def _wins(first, second, margin):
    return sum(a >= b + margin for a, b in zip(_scores(first), _scores(second)))


@pytest.mark.slow
@pytest.mark.parametrize("task, margin", [("bandit", 0.5), ("gridworld", 0.0)])
def test_l1_is_not_worse_than_l2(directional_runs, task, margin):
    """Test L1 >= L2 on corrupted data in at least two of three seeds."""
    l1 = directional_runs(task, "l1", "none")
    l2 = directional_runs(task, "l2", "none")
    assert _wins(l1, l2, margin) >= 2


@pytest.mark.slow
@pytest.mark.parametrize(
    "task, loss, margin",
    [("bandit", "l2", 0.5), ("bandit", "l1", -0.05), ("gridworld", "l2", 0.0), ("gridworld", "l1", 0.0)],
)
def test_normal_priorities_are_not_worse(directional_runs, task, loss, margin):
    """Test X + PER(Normal) >= X in at least two of three seeds."""
    prioritized = directional_runs(task, loss, "normal")
    plain = directional_runs(task, loss, "none")
    assert _wins(prioritized, plain, margin) >= 2


@pytest.mark.slow
def test_robust_prioritized_mean_beats_plain_l2(directional_runs):
    """Test that L1 + PER(Normal) ends with a larger bandit action mean than L2 alone in every seed."""
    robust = directional_runs("bandit", "l1", "normal")
    plain = directional_runs("bandit", "l2", "none")
    for (_, mu_robust), (_, mu_plain) in zip(robust, plain):
        assert mu_robust[0] > mu_plain[0]
