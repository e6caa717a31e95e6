# SPDX-License-Identifier: MIT
"""Normalized-score constants and conversion."""
import math
from dataclasses import dataclass
from typing import Dict, Optional

from cawr.errors import ConfigurationError


@dataclass(frozen=True)
class ScoreEntry:
    """Returns of the random and expert reference policies for one task."""

    j_random: float
    j_expert: float

    def __post_init__(self):
        if not (math.isfinite(self.j_random) and math.isfinite(self.j_expert)):
            raise ConfigurationError("score constants must be finite")
        if self.j_expert <= self.j_random:
            raise ConfigurationError(
                f"expert return {self.j_expert} must exceed random return {self.j_random}"
            )


SCORE_TABLE: Dict[str, ScoreEntry] = {
    "hopper": ScoreEntry(-20.27, 3234.3),
    "walker2d": ScoreEntry(1.63, 4592.3),
    "halfcheetah": ScoreEntry(-280.18, 12135.0),
}


def normalized_score(j: float, entry: ScoreEntry) -> float:
    """100 * (J - J_random) / (J_expert - J_random); not clipped."""
    return 100.0 * (j - entry.j_random) / (entry.j_expert - entry.j_random)


def lookup_score(task: str, j_random: Optional[float] = None, j_expert: Optional[float] = None) -> Optional[ScoreEntry]:
    """Explicit constants win; otherwise the table entry for ``task`` (matched on its prefix)."""
    if j_random is not None and j_expert is not None:
        return ScoreEntry(j_random, j_expert)
    key = task.lower().split("-")[0]
    return SCORE_TABLE.get(key)
