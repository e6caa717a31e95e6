# SPDX-License-Identifier: MIT
"""Advantage-based priorities, a sum tree and the dual-batch replay buffer."""
import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy.special import softmax
from scipy.stats import entropy

from cawr.enums import PriorityKind, StatsMode
from cawr.errors import ConfigurationError, DataValidationError
from cawr.numerics import population_std

logger = logging.getLogger(__name__)

# exp() arguments are capped a little above log(p_max) before clipping
_EXP_HEADROOM = 1.0


@dataclass(frozen=True)
class PriorityScheme:
    """Priority function h and its constants."""

    kind: PriorityKind = PriorityKind.NONE
    lam: float = 0.2
    quantile_level: float = 0.5
    odpr_scale: float = 1.0
    floor: float = 1e-6
    p_max: float = 1e4

    def __post_init__(self):
        object.__setattr__(self, "kind", PriorityKind(self.kind))
        if self.lam <= 0 or self.odpr_scale <= 0:
            raise ConfigurationError("priority lambda and ODPR scale must be positive")
        if not 0.0 < self.quantile_level < 1.0:
            raise ConfigurationError("quantile level must be in (0, 1)")
        if not 0.0 < self.floor <= self.p_max:
            raise ConfigurationError("priorities need 0 < floor <= p_max")

    @classmethod
    def from_settings(cls, settings, lam: float, p_max: float) -> "PriorityScheme":
        """Build from a PrioritySettings model; ``lam`` and ``p_max`` are the resolved defaults."""
        return cls(
            kind=settings.kind,
            lam=lam,
            quantile_level=settings.quantile_level,
            odpr_scale=settings.odpr_scale,
            floor=settings.floor,
            p_max=p_max,
        )

    @property
    def enabled(self) -> bool:
        return self.kind != PriorityKind.NONE


@dataclass(frozen=True)
class AdvantageStats:
    """Summary of the most recently evaluated advantages."""

    mean: float = 0.0
    std: float = 1.0
    quantile: float = 0.0
    minimum: float = 0.0
    aw_normalizer: Optional[float] = None

    @classmethod
    def from_advantages(cls, advantages: np.ndarray, quantile_level: float = 0.5) -> "AdvantageStats":
        adv = np.asarray(advantages, dtype=np.float64).reshape(-1)
        if adv.size == 0:
            raise DataValidationError("advantage statistics need at least one value")
        return cls(
            mean=float(adv.mean()),
            std=population_std(adv),
            quantile=float(np.quantile(adv, quantile_level)),
            minimum=float(adv.min()),
        )

    def blend(self, other: "AdvantageStats", decay: float) -> "AdvantageStats":
        """Exponential moving average towards ``other``."""
        keep = 1.0 - decay
        return AdvantageStats(
            mean=decay * self.mean + keep * other.mean,
            std=decay * self.std + keep * other.std,
            quantile=decay * self.quantile + keep * other.quantile,
            minimum=decay * self.minimum + keep * other.minimum,
            aw_normalizer=other.aw_normalizer,
        )


def _capped_exp(exponent: np.ndarray, cap: float) -> np.ndarray:
    return np.exp(np.minimum(exponent, math.log(cap) + _EXP_HEADROOM))


def _centering(scheme: PriorityScheme, stats: AdvantageStats):
    """(c1, c2) such that the exponential kinds are exp(c2 (A - c1))."""
    kind = scheme.kind
    if kind in (PriorityKind.EXP_NORMAL, PriorityKind.EXP_QUANTILE):
        if stats.std <= 0.0:
            logger.warning("advantage std is zero, %s priorities fall back to the standard form", kind.value)
            return 0.0, 1.0 / scheme.lam
        centre = stats.mean if kind == PriorityKind.EXP_NORMAL else stats.quantile
        return centre, 1.0 / (scheme.lam * stats.std)
    return 0.0, 1.0 / scheme.lam


def priorities(scheme: PriorityScheme, advantages, stats: Optional[AdvantageStats] = None) -> np.ndarray:
    """
    h(A) for a batch of advantages, clipped to [floor, p_max].

    Standard: exp(A / lam). Normal: exp((A - mean) / (lam std)).
    Quantile: exp((A - q) / (lam std)). ODPR: max(c (A - min), floor).
    AW: exp(A / lam) / Z, with Z from ``stats.aw_normalizer`` or the batch.
    None and Constant return ones.
    """
    adv = np.asarray(advantages, dtype=np.float64).reshape(-1)
    if stats is None:
        stats = AdvantageStats.from_advantages(adv, scheme.quantile_level) if adv.size else AdvantageStats()
    kind = scheme.kind
    if kind in (PriorityKind.NONE, PriorityKind.CONSTANT):
        raw = np.ones_like(adv)
    elif kind == PriorityKind.ODPR:
        raw = scheme.odpr_scale * (adv - stats.minimum)
    elif kind == PriorityKind.AW:
        if stats.aw_normalizer is None:
            raw = softmax(adv / scheme.lam) if adv.size else adv
        else:
            raw = np.exp(adv / scheme.lam) / stats.aw_normalizer
    else:
        c1, c2 = _centering(scheme, stats)
        raw = _capped_exp(c2 * (adv - c1), scheme.p_max)
    return np.clip(raw, scheme.floor, scheme.p_max)


def weight_centering(scheme: PriorityScheme, stats: AdvantageStats):
    """The (c1, c2) pair the policy weights share with the priority function."""
    return _centering(scheme, stats)


class SumTree:
    """
    Binary tree of partial sums over a fixed number of leaves.

    The leaf count is padded to a power of two so leaves sit in index order
    at the bottom level; padding leaves hold zero.
    """

    def __init__(self, size: int, initial: float = 1.0):
        if size < 1:
            raise DataValidationError("sum tree needs at least one leaf")
        self.size = int(size)
        self.leaves = 1 << max(0, (self.size - 1).bit_length())
        self.depth = self.leaves.bit_length() - 1
        self.nodes = np.zeros(2 * self.leaves)
        self.nodes[self.leaves:self.leaves + self.size] = initial
        for level in range(self.depth - 1, -1, -1):
            start, stop = 1 << level, 1 << (level + 1)
            self.nodes[start:stop] = self.nodes[2 * start:2 * stop:2] + self.nodes[2 * start + 1:2 * stop:2]

    @property
    def total(self) -> float:
        return float(self.nodes[1])

    @property
    def values(self) -> np.ndarray:
        return self.nodes[self.leaves:self.leaves + self.size].copy()

    def update(self, indices: np.ndarray, values: np.ndarray) -> None:
        """Overwrite leaves; with repeated indices the last write wins."""
        indices = np.asarray(indices, dtype=np.int64).reshape(-1)
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        if indices.size == 0:
            return
        # keep the last occurrence of every index
        last = indices.size - 1 - np.unique(indices[::-1], return_index=True)[1]
        indices, values = indices[last], values[last]
        nodes = indices + self.leaves
        self.nodes[nodes] = values
        for _ in range(self.depth):
            nodes = np.unique(nodes // 2)
            # parents are recomputed from children so rounding never accumulates
            self.nodes[nodes] = self.nodes[2 * nodes] + self.nodes[2 * nodes + 1]

    def find(self, targets: np.ndarray) -> np.ndarray:
        """Leaf index for each prefix-sum target in [0, total)."""
        v = np.asarray(targets, dtype=np.float64).reshape(-1).copy()
        idx = np.ones(v.shape[0], dtype=np.int64)
        for _ in range(self.depth):
            left = 2 * idx
            left_sum = self.nodes[left]
            go_right = v >= left_sum
            v = np.where(go_right, v - left_sum, v)
            idx = np.where(go_right, left + 1, left)
        return np.minimum(idx - self.leaves, self.size - 1)


class ReplayBuffer:
    """
    Priorities over a fixed dataset with two independent random streams.

    The uniform stream draws D1 and is never influenced by priorities. The
    policy stream draws D2, proportionally to priority when PER is on.
    """

    def __init__(
        self,
        size: int,
        scheme: Optional[PriorityScheme] = None,
        seed: Union[int, np.random.SeedSequence] = 0,
        stats_mode: StatsMode = StatsMode.BATCH,
        ema_decay: float = 0.99,
    ):
        if size < 1:
            raise DataValidationError("replay buffer needs a non-empty dataset")
        if not 0.0 <= ema_decay < 1.0:
            raise ConfigurationError("ema decay must be in [0, 1)")
        self.size = int(size)
        self.scheme = scheme or PriorityScheme()
        self.stats_mode = StatsMode(stats_mode)
        self.ema_decay = ema_decay
        self.tree = SumTree(self.size, initial=1.0)
        self.stats: Optional[AdvantageStats] = None
        root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        uniform_seed, policy_seed = root.spawn(2)
        self._uniform_rng = np.random.default_rng(uniform_seed)
        self._policy_rng = np.random.default_rng(policy_seed)

    def __len__(self) -> int:
        return self.size

    def _uniform_indices(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if n < 1:
            raise DataValidationError("batch size must be at least 1")
        u = rng.random(n)
        return np.minimum(np.floor(u * self.size).astype(np.int64), self.size - 1)

    def sample_uniform(self, n: int) -> np.ndarray:
        """D1: i.i.d. uniform indices, with replacement."""
        return self._uniform_indices(self._uniform_rng, n)

    def sample_prioritized(self, n: int) -> np.ndarray:
        """D2: P(i) = p_i / sum(p), with replacement; uniform when PER is off."""
        if not self.scheme.enabled:
            return self._uniform_indices(self._policy_rng, n)
        if n < 1:
            raise DataValidationError("batch size must be at least 1")
        u = self._policy_rng.random(n)
        return self.tree.find(u * self.tree.total)

    def _refresh_stats(self, advantages: np.ndarray) -> AdvantageStats:
        batch = AdvantageStats.from_advantages(advantages, self.scheme.quantile_level)
        if self.stats_mode == StatsMode.EMA and self.stats is not None:
            batch = self.stats.blend(batch, self.ema_decay)
        self.stats = batch
        return batch

    def update_priorities(self, indices, advantages) -> np.ndarray:
        """
        Overwrite priorities at ``indices`` with h(advantages).

        Statistics are refreshed from these advantages first. For AW the tree
        keeps exp(A / lam) and the dataset-wide normalizer is the tree total.

        Returns:
            the values written to the tree
        """
        indices = np.asarray(indices, dtype=np.int64).reshape(-1)
        adv = np.asarray(advantages, dtype=np.float64).reshape(-1)
        if indices.shape != adv.shape:
            raise DataValidationError("indices and advantages must have the same length")
        if indices.size == 0:
            return np.zeros(0)
        if indices.min() < 0 or indices.max() >= self.size:
            raise DataValidationError(f"priority index out of range [0, {self.size})")
        if not np.all(np.isfinite(adv)):
            raise DataValidationError("advantages must be finite")
        stats = self._refresh_stats(adv)
        if self.scheme.kind == PriorityKind.AW:
            # unnormalized; proportional sampling divides by the total
            values = np.clip(_capped_exp(adv / self.scheme.lam, self.scheme.p_max), self.scheme.floor, self.scheme.p_max)
        else:
            values = priorities(self.scheme, adv, stats)
        self.tree.update(indices, values)
        if self.scheme.kind == PriorityKind.AW:
            self.stats = AdvantageStats(stats.mean, stats.std, stats.quantile, stats.minimum, self.tree.total)
        return values

    @property
    def priorities(self) -> np.ndarray:
        return self.tree.values

    def probabilities(self) -> np.ndarray:
        return self.tree.values / self.tree.total

    def priority_entropy(self) -> float:
        """Shannon entropy (nats) of the sampling distribution; log(N) when uniform."""
        return float(entropy(self.probabilities()))

    def priority_histogram(self, bins: int = 16):
        """Counts of log10 priorities over ``bins`` equal-width bins."""
        return np.histogram(np.log10(self.tree.values), bins=bins)

    def dump_priority_histogram(self, path: Union[str, Path], iteration: int, bins: int = 16) -> Path:
        """Append one histogram to a CSV with columns iteration, log10_low, log10_high, count."""
        path = Path(path)
        counts, edges = self.priority_histogram(bins)
        new_file = not path.exists()
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("a", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            if new_file:
                writer.writerow(["iteration", "log10_low", "log10_high", "count"])
            for count, low, high in zip(counts, edges[:-1], edges[1:]):
                writer.writerow([iteration, low, high, int(count)])
        return path
