# SPDX-License-Identifier: MIT
"""Priority function, sum tree and replay buffer tests."""
import csv
import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from cawr.enums import PriorityKind, StatsMode
from cawr.errors import ConfigurationError, DataValidationError
from cawr.replay import AdvantageStats, PriorityScheme, ReplayBuffer, SumTree, priorities, weight_centering

advantages = st.floats(min_value=-20.0, max_value=20.0, allow_nan=False)


def test_priority_examples():
    """Test hand-computed priorities for each kind."""
    standard = PriorityScheme(PriorityKind.EXP_STANDARD, lam=0.2)
    assert priorities(standard, [0.0])[0] == pytest.approx(1.0)
    assert priorities(standard, [0.5])[0] == pytest.approx(math.exp(2.5))
    assert math.exp(2.5) == pytest.approx(12.182, abs=1e-3)

    odpr = PriorityScheme(PriorityKind.ODPR, odpr_scale=1.0)
    np.testing.assert_allclose(priorities(odpr, [0.2, 0.5, -0.1]), [0.3, 0.6, 1e-6])

    aw = PriorityScheme(PriorityKind.AW, lam=0.2)
    np.testing.assert_allclose(priorities(aw, [0.4, 0.4]), [0.5, 0.5])

    for kind in (PriorityKind.NONE, PriorityKind.CONSTANT):
        np.testing.assert_array_equal(priorities(PriorityScheme(kind), [-3.0, 0.0, 9.0]), np.ones(3))


def test_normal_and_quantile_centering():
    """Test the standardized exponential forms against explicit stats."""
    stats = AdvantageStats(mean=0.5, std=2.0, quantile=1.0, minimum=-1.0)
    normal = PriorityScheme(PriorityKind.EXP_NORMAL, lam=0.5)
    quantile = PriorityScheme(PriorityKind.EXP_QUANTILE, lam=0.5)
    assert priorities(normal, [2.5], stats)[0] == pytest.approx(math.exp(2.0))
    assert priorities(quantile, [2.5], stats)[0] == pytest.approx(math.exp(1.5))
    assert weight_centering(normal, stats) == (0.5, 1.0)
    assert weight_centering(quantile, stats) == (1.0, 1.0)
    assert weight_centering(PriorityScheme(PriorityKind.NONE, lam=0.5), stats) == (0.0, 2.0)
    assert weight_centering(PriorityScheme(PriorityKind.CONSTANT, lam=0.5), stats) == (0.0, 2.0)


def test_zero_std_falls_back_to_standard(caplog):
    """Test the warning and the exp(A / lam) fallback when all advantages agree."""
    scheme = PriorityScheme(PriorityKind.EXP_NORMAL, lam=0.5)
    with caplog.at_level(logging.WARNING, logger="cawr.replay"):
        values = priorities(scheme, [0.3, 0.3])
    np.testing.assert_allclose(values, [math.exp(0.6), math.exp(0.6)])
    assert "std is zero" in caplog.text
    assert AdvantageStats.from_advantages(np.full(3, 0.1)).std == 0.0
    np.testing.assert_allclose(priorities(scheme, [0.1, 0.1, 0.1]), np.full(3, math.exp(0.2)))


def test_priorities_are_clipped():
    """Test that no priority leaves [floor, p_max]."""
    scheme = PriorityScheme(PriorityKind.EXP_STANDARD, lam=0.01, floor=1e-3, p_max=100.0)
    values = priorities(scheme, [-50.0, 0.0, 50.0, 1e6])
    np.testing.assert_allclose(values, [1e-3, 1.0, 100.0, 100.0])


@pytest.mark.parametrize("kind", list(PriorityKind))
@settings(max_examples=100, deadline=None)
@given(a=advantages, b=advantages)
def test_priorities_are_monotone(kind, a, b):
    """Test h(max(a, b)) >= h(min(a, b)) with shared stats."""
    scheme = PriorityScheme(kind, lam=0.3)
    stats = AdvantageStats(mean=0.1, std=1.3, quantile=0.2, minimum=-20.0)
    high, low = priorities(scheme, [max(a, b), min(a, b)], stats)
    assert high >= low
    assert scheme.floor <= low <= scheme.p_max


@pytest.mark.parametrize(
    "kwargs",
    [{"lam": 0.0}, {"odpr_scale": -1.0}, {"quantile_level": 1.0}, {"floor": 0.0}, {"floor": 10.0, "p_max": 1.0}],
)
def test_scheme_validation(kwargs):
    """Test the scheme constant checks."""
    with pytest.raises(ConfigurationError):
        PriorityScheme(PriorityKind.EXP_STANDARD, **kwargs)


def test_sum_tree_prefix_search():
    """Test totals and prefix lookups on a non power-of-two leaf count."""
    tree = SumTree(5)
    assert tree.leaves == 8
    assert tree.total == 5.0
    assert tree.find(np.array([0.0, 0.99, 1.0, 4.5, 4.9999])).tolist() == [0, 0, 1, 4, 4]
    tree.update([1, 3], [0.0, 2.0])
    assert tree.total == pytest.approx(5.0)
    np.testing.assert_array_equal(tree.values, [1.0, 0.0, 1.0, 2.0, 1.0])
    assert tree.find(np.array([1.5, 2.5, 3.99])).tolist() == [2, 3, 3]
    tree.update([2, 2], [7.0, 4.0])
    assert tree.values[2] == 4.0


def test_uniform_sampling():
    """Test single-index buffers, frequencies and seeding."""
    assert ReplayBuffer(1, seed=0).sample_uniform(5).tolist() == [0] * 5
    counts = np.bincount(ReplayBuffer(10, seed=1).sample_uniform(10 ** 6), minlength=10) / 10 ** 6
    assert np.all((counts >= 0.09) & (counts <= 0.11))
    np.testing.assert_array_equal(ReplayBuffer(50, seed=3).sample_uniform(64), ReplayBuffer(50, seed=3).sample_uniform(64))
    with pytest.raises(DataValidationError):
        ReplayBuffer(0)
    with pytest.raises(DataValidationError):
        ReplayBuffer(3).sample_uniform(0)


def _draw_frequencies(buffer, n=10 ** 5):
    return np.bincount(buffer.sample_prioritized(n), minlength=buffer.size) / n


def test_prioritized_sampling_frequencies():
    """Test {1, 1} and {3, 1} proportional sampling."""
    buffer = ReplayBuffer(2, PriorityScheme(PriorityKind.EXP_STANDARD, lam=1.0), seed=4)
    np.testing.assert_allclose(_draw_frequencies(buffer), [0.5, 0.5], atol=0.01)
    buffer.update_priorities([0, 1], [math.log(3.0), 0.0])
    np.testing.assert_allclose(buffer.priorities, [3.0, 1.0])
    np.testing.assert_allclose(buffer.probabilities(), [0.75, 0.25])
    np.testing.assert_allclose(_draw_frequencies(buffer), [0.75, 0.25], atol=0.01)


def test_floor_priority_is_rarely_drawn():
    """Test that a floor priority keeps a tiny but positive probability."""
    buffer = ReplayBuffer(2, PriorityScheme(PriorityKind.ODPR), seed=5)
    buffer.update_priorities([0, 1], [1.0, 0.0])
    probs = buffer.probabilities()
    assert 0.0 < probs[1] <= 2 * 1e-6 / buffer.tree.total
    assert np.count_nonzero(buffer.sample_prioritized(10 ** 4) == 1) <= 1


def test_prioritized_sampling_passes_chi_square():
    """Test goodness of fit of 10^5 draws over 16 indices."""
    rng = np.random.default_rng(6)
    buffer = ReplayBuffer(16, PriorityScheme(PriorityKind.EXP_STANDARD, lam=1.0), seed=7)
    buffer.update_priorities(np.arange(16), rng.normal(size=16))
    n = 10 ** 5
    observed = np.bincount(buffer.sample_prioritized(n), minlength=16)
    assert chisquare(observed, buffer.probabilities() * n).pvalue > 0.01


def test_uniform_stream_ignores_priorities():
    """Test that D1 draws do not depend on priority writes or D2 draws."""
    plain = ReplayBuffer(20, PriorityScheme(PriorityKind.EXP_STANDARD, lam=0.1), seed=8)
    skewed = ReplayBuffer(20, PriorityScheme(PriorityKind.EXP_STANDARD, lam=0.1), seed=8)
    skewed.update_priorities(np.arange(20), np.linspace(-1.0, 1.0, 20))
    for _ in range(5):
        skewed.sample_prioritized(32)
        np.testing.assert_array_equal(skewed.sample_uniform(32), plain.sample_uniform(32))


def test_disabled_priorities_draw_uniformly():
    """Test that kind none samples D2 from its own uniform stream."""
    buffer = ReplayBuffer(4, PriorityScheme(PriorityKind.NONE), seed=9)
    assert not buffer.scheme.enabled
    freqs = _draw_frequencies(buffer)
    np.testing.assert_allclose(freqs, 0.25, atol=0.01)


def test_update_overwrites_without_multiplying():
    """Test idempotent overwrites and untouched indices."""
    buffer = ReplayBuffer(4, PriorityScheme(PriorityKind.EXP_STANDARD, lam=0.2), seed=0)
    buffer.update_priorities([0, 1], [0.0, math.log(2.0) * 0.2])
    np.testing.assert_allclose(buffer.priorities, [1.0, 2.0, 1.0, 1.0])
    first = buffer.priorities
    buffer.update_priorities([0, 1], [0.0, math.log(2.0) * 0.2])
    np.testing.assert_array_equal(buffer.priorities, first)


def test_update_refreshes_batch_stats():
    """Test that stats come from the latest batch only, or blend under EMA."""
    buffer = ReplayBuffer(6, PriorityScheme(PriorityKind.EXP_NORMAL), seed=0)
    buffer.update_priorities([0, 1], [1.0, 3.0])
    buffer.update_priorities([2, 3], [-1.0, 1.0])
    assert (buffer.stats.mean, buffer.stats.std) == (0.0, 1.0)
    assert buffer.stats.minimum == -1.0

    ema = ReplayBuffer(6, PriorityScheme(PriorityKind.EXP_NORMAL), seed=0, stats_mode=StatsMode.EMA, ema_decay=0.5)
    ema.update_priorities([0, 1], [1.0, 3.0])
    ema.update_priorities([2, 3], [-1.0, 1.0])
    assert ema.stats.mean == pytest.approx(1.0)


def test_aw_priorities_use_dataset_normalizer():
    """Test that AW sampling probabilities are a softmax over the dataset."""
    buffer = ReplayBuffer(3, PriorityScheme(PriorityKind.AW, lam=0.5), seed=0)
    buffer.update_priorities([0, 1], [0.5, -0.5])
    expected = np.array([math.e, math.exp(-1.0), 1.0])
    np.testing.assert_allclose(buffer.probabilities(), expected / expected.sum())
    assert buffer.stats.aw_normalizer == pytest.approx(expected.sum())


def test_update_validation():
    """Test index, length and finiteness checks on priority writes."""
    buffer = ReplayBuffer(3, PriorityScheme(PriorityKind.EXP_STANDARD), seed=0)
    with pytest.raises(DataValidationError):
        buffer.update_priorities([3], [0.0])
    with pytest.raises(DataValidationError):
        buffer.update_priorities([0, 1], [0.0])
    with pytest.raises(DataValidationError):
        buffer.update_priorities([0], [np.nan])
    assert buffer.update_priorities([], []).size == 0


def test_priority_entropy_and_histogram(tmp_path):
    """Test log(N) entropy when uniform and the CSV histogram dump."""
    buffer = ReplayBuffer(8, PriorityScheme(PriorityKind.EXP_STANDARD, lam=1.0), seed=0)
    assert buffer.priority_entropy() == pytest.approx(math.log(8))
    buffer.update_priorities(np.arange(8), np.linspace(0.0, 3.0, 8))
    assert buffer.priority_entropy() < math.log(8)

    path = tmp_path / "priorities.csv"
    buffer.dump_priority_histogram(path, 10, bins=4)
    buffer.dump_priority_histogram(path, 20, bins=4)
    with path.open(newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["iteration", "log10_low", "log10_high", "count"]
    assert len(rows) == 1 + 2 * 4
    assert sum(int(r[3]) for r in rows[1:5]) == 8
    assert {r[0] for r in rows[1:]} == {"10", "20"}
