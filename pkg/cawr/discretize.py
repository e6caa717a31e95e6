# SPDX-License-Identifier: MIT
"""Maps real vectors to finite cell indices for tabular estimates."""
from typing import Any, Dict, List, Sequence, Union

import numpy as np

from cawr.errors import ConfigurationError, DataValidationError

ArrayLike = Union[np.ndarray, Sequence[float]]


def _as_batch(x: ArrayLike, dim: int) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise DataValidationError(f"expected vectors of dimension {dim}, got shape {np.shape(x)}")
    return arr


class UniformDiscretizer:
    """Equal-width bins per dimension, flattened row-major."""

    kind = "uniform"

    def __init__(self, low: ArrayLike, high: ArrayLike, bins: Union[int, Sequence[int]]):
        low = np.atleast_1d(np.asarray(low, dtype=np.float64))
        high = np.atleast_1d(np.asarray(high, dtype=np.float64))
        if low.shape != high.shape:
            raise ConfigurationError("low and high must have the same shape")
        bins_arr = np.broadcast_to(np.asarray(bins, dtype=np.int64), low.shape).copy()
        if np.any(bins_arr < 1):
            raise ConfigurationError("bin counts must be positive")
        if np.any(high < low):
            raise ConfigurationError("high must not be below low")
        # a zero-width range still gets one unit of width
        flat = high <= low
        low = np.where(flat, low - 0.5, low)
        high = np.where(flat, high + 0.5, high)
        self.low = low
        self.high = high
        self.bins = bins_arr
        self.dim = int(low.shape[0])
        self.n_cells = int(np.prod(bins_arr))

    @classmethod
    def for_indices(cls, n: int) -> "UniformDiscretizer":
        """One bin per integer in [0, n)."""
        return cls([-0.5], [n - 0.5], [n])

    @classmethod
    def covering(cls, data: np.ndarray, bins: int) -> "UniformDiscretizer":
        """Bins spanning the observed range of a data matrix."""
        data = np.asarray(data, dtype=np.float64)
        return cls(data.min(axis=0), data.max(axis=0), bins)

    def index(self, x: ArrayLike) -> np.ndarray:
        batch = _as_batch(x, self.dim)
        scaled = (batch - self.low) / (self.high - self.low) * self.bins
        cells = np.clip(np.floor(scaled).astype(np.int64), 0, self.bins - 1)
        flat = np.ravel_multi_index(tuple(cells.T), tuple(self.bins))
        return flat if np.ndim(x) == 2 else int(flat[0])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "low": self.low.tolist(),
            "high": self.high.tolist(),
            "bins": self.bins.tolist(),
        }


class NearestCodebook:
    """Snaps vectors to the closest row of a fixed codebook."""

    kind = "codebook"

    def __init__(self, codes: ArrayLike):
        codes = np.asarray(codes, dtype=np.float64)
        if codes.ndim != 2 or codes.shape[0] < 1:
            raise ConfigurationError("codebook must be a non-empty matrix")
        self.codes = codes
        self.dim = int(codes.shape[1])
        self.n_cells = int(codes.shape[0])

    def index(self, x: ArrayLike) -> np.ndarray:
        batch = _as_batch(x, self.dim)
        dist = ((batch[:, None, :] - self.codes[None, :, :]) ** 2).sum(axis=2)
        flat = np.argmin(dist, axis=1)
        return flat if np.ndim(x) == 2 else int(flat[0])

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "codes": self.codes.tolist()}


class ProductDiscretizer:
    """Discretizes a concatenated vector part by part."""

    kind = "product"

    def __init__(self, parts: Sequence[Any]):
        if not parts:
            raise ConfigurationError("product discretizer needs at least one part")
        self.parts: List[Any] = list(parts)
        self.dim = int(sum(p.dim for p in self.parts))
        self.n_cells = int(np.prod([p.n_cells for p in self.parts]))

    def index(self, x: ArrayLike) -> np.ndarray:
        batch = _as_batch(x, self.dim)
        indices = []
        start = 0
        for part in self.parts:
            indices.append(part.index(batch[:, start:start + part.dim]))
            start += part.dim
        flat = np.ravel_multi_index(tuple(indices), tuple(p.n_cells for p in self.parts))
        return flat if np.ndim(x) == 2 else int(flat[0])

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "parts": [p.to_dict() for p in self.parts]}


def discretizer_from_dict(data: Dict[str, Any]):
    """Rebuild a discretizer saved with ``to_dict``."""
    kind = data.get("kind")
    if kind == UniformDiscretizer.kind:
        return UniformDiscretizer(data["low"], data["high"], data["bins"])
    if kind == NearestCodebook.kind:
        return NearestCodebook(data["codes"])
    if kind == ProductDiscretizer.kind:
        return ProductDiscretizer([discretizer_from_dict(p) for p in data["parts"]])
    raise ConfigurationError(f"unknown discretizer kind {kind!r}")
