# SPDX-License-Identifier: MIT
"""Robust per-coordinate regression losses f(u) for the policy objective."""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np
from scipy.optimize import bisect

from cawr.enums import LossKind
from cawr.errors import ConfigurationError

logger = logging.getLogger(__name__)

Real = Union[float, np.ndarray]

_CONVEX_KINDS = (LossKind.L2, LossKind.L1, LossKind.HUBER)


@dataclass(frozen=True)
class RobustLoss:
    """
    One member of the loss family, normalized so that f(0) = 0.

    Flat:  -log[c2 exp(-c1 u^2) + c3] + c4
    Skew:  -log[c2 (exp(-c1 u^2) + 1 / (c3 |u| + 1))] + c4
    Huber: u^2 for |u| <= kappa, else 2 kappa |u| - kappa^2
    """

    kind: LossKind
    kappa: float = 0.2
    c1: float = 1.0
    c2: float = 1.0
    c3: float = 1.0
    sigma: float = 1.0
    c4: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", LossKind(self.kind))
        for name in ("kappa", "c1", "c2", "c3", "sigma"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ConfigurationError(f"loss parameter {name} must be positive and finite, got {value}")
        if self.kind == LossKind.FLAT:
            c4 = math.log(self.c2 + self.c3)
        elif self.kind == LossKind.SKEW:
            c4 = math.log(2.0 * self.c2)
        else:
            c4 = 0.0
        object.__setattr__(self, "c4", c4)

    @classmethod
    def l2(cls) -> "RobustLoss":
        return cls(LossKind.L2)

    @classmethod
    def l1(cls) -> "RobustLoss":
        return cls(LossKind.L1)

    @classmethod
    def huber(cls, kappa: float = 0.2) -> "RobustLoss":
        return cls(LossKind.HUBER, kappa=kappa)

    @classmethod
    def flat(cls, c1: float, c2: float, c3: float) -> "RobustLoss":
        return cls(LossKind.FLAT, c1=c1, c2=c2, c3=c3)

    @classmethod
    def skew(cls, c1: float, c2: float, c3: float) -> "RobustLoss":
        return cls(LossKind.SKEW, c1=c1, c2=c2, c3=c3)

    @classmethod
    def for_sigma(
        cls,
        kind: LossKind,
        sigma: float,
        kappa: float = 0.2,
        c1: Optional[float] = None,
        c2: Optional[float] = None,
        c3: Optional[float] = None,
    ) -> "RobustLoss":
        """
        Build a loss whose Flat/Skew defaults scale with the policy std.

        Flat defaults to (2/sigma^2, 1/sigma, 0.5), Skew to
        (1/sigma^2, 1/sigma, 1/sigma); explicit constants win.
        """
        kind = LossKind(kind)
        if sigma <= 0:
            raise ConfigurationError("sigma must be positive")
        if kind == LossKind.FLAT:
            defaults = (2.0 / sigma ** 2, 1.0 / sigma, 0.5)
        elif kind == LossKind.SKEW:
            defaults = (1.0 / sigma ** 2, 1.0 / sigma, 1.0 / sigma)
        else:
            defaults = (1.0, 1.0, 1.0)
        return cls(
            kind,
            kappa=kappa,
            c1=defaults[0] if c1 is None else c1,
            c2=defaults[1] if c2 is None else c2,
            c3=defaults[2] if c3 is None else c3,
            sigma=sigma,
        )


def _result(u, value: np.ndarray) -> Real:
    return float(value) if np.ndim(u) == 0 else value


def loss_value(loss: RobustLoss, u: Real) -> Real:
    """f(u) for residual u = a - mu(s)."""
    x = np.asarray(u, dtype=np.float64)
    if loss.kind == LossKind.L2:
        value = x ** 2
    elif loss.kind == LossKind.L1:
        value = np.abs(x)
    elif loss.kind == LossKind.HUBER:
        ax = np.abs(x)
        value = np.where(ax <= loss.kappa, x ** 2, 2.0 * loss.kappa * ax - loss.kappa ** 2)
    elif loss.kind == LossKind.FLAT:
        value = -np.log(loss.c2 * np.exp(-loss.c1 * x ** 2) + loss.c3) + loss.c4
    else:
        inner = np.exp(-loss.c1 * x ** 2) + 1.0 / (loss.c3 * np.abs(x) + 1.0)
        value = -np.log(loss.c2 * inner) + loss.c4
    # rounding can leave tiny negatives near the origin
    return _result(u, np.maximum(value, 0.0))


def loss_grad(loss: RobustLoss, u: Real) -> Real:
    """df/du; the L1 subgradient at 0 is 0."""
    x = np.asarray(u, dtype=np.float64)
    if loss.kind == LossKind.L2:
        grad = 2.0 * x
    elif loss.kind == LossKind.L1:
        grad = np.sign(x)
    elif loss.kind == LossKind.HUBER:
        grad = np.where(np.abs(x) <= loss.kappa, 2.0 * x, 2.0 * loss.kappa * np.sign(x))
    elif loss.kind == LossKind.FLAT:
        g = loss.c2 * np.exp(-loss.c1 * x ** 2)
        grad = 2.0 * loss.c1 * x * g / (g + loss.c3)
    else:
        e = np.exp(-loss.c1 * x ** 2)
        q = 1.0 / (loss.c3 * np.abs(x) + 1.0)
        grad = (2.0 * loss.c1 * x * e + loss.c3 * np.sign(x) * q ** 2) / (e + q)
    return _result(u, grad)


def loss_curvature(loss: RobustLoss, u: Real) -> Real:
    """
    Second derivative f''(u) away from kinks.

    For Flat and Skew f = -log D + const, so f'' = (D'^2 - D'' D) / D^2.
    """
    x = np.asarray(u, dtype=np.float64)
    if loss.kind == LossKind.L2:
        curv = np.full_like(x, 2.0)
    elif loss.kind == LossKind.L1:
        curv = np.zeros_like(x)
    elif loss.kind == LossKind.HUBER:
        curv = np.where(np.abs(x) < loss.kappa, 2.0, 0.0)
    elif loss.kind == LossKind.FLAT:
        g = loss.c2 * np.exp(-loss.c1 * x ** 2)
        curv = 2.0 * loss.c1 * g * (g + loss.c3 - 2.0 * loss.c1 * loss.c3 * x ** 2) / (g + loss.c3) ** 2
    else:
        e = np.exp(-loss.c1 * x ** 2)
        q = 1.0 / (loss.c3 * np.abs(x) + 1.0)
        d1 = -2.0 * loss.c1 * x * e - loss.c3 * np.sign(x) * q ** 2
        d2 = e * (4.0 * loss.c1 ** 2 * x ** 2 - 2.0 * loss.c1) + 2.0 * loss.c3 ** 2 * q ** 3
        d0 = e + q
        curv = (d1 ** 2 - d2 * d0) / d0 ** 2
    return _result(u, curv)


def convex_radius(loss: RobustLoss) -> float:
    """
    Largest r such that f is convex on (-r, r).

    Infinite for L2, L1 and Huber. For Flat and Skew the first positive
    root of f'' is bracketed on a log grid and refined by bisection.
    """
    if loss.kind in _CONVEX_KINDS:
        return math.inf

    def curvature(u: float) -> float:
        return float(loss_curvature(loss, u))

    scale = 1.0 / math.sqrt(loss.c1)
    grid = scale * np.logspace(-6, 4, 2001)
    curv = loss_curvature(loss, grid)
    if curv[0] <= 0:
        logger.warning("%s loss is not convex next to the origin", loss.kind.value)
        return 0.0
    nonconvex = np.flatnonzero(curv <= 0)
    if nonconvex.size == 0:
        return math.inf
    hi = float(grid[nonconvex[0]])
    lo = float(grid[nonconvex[0] - 1])
    return float(bisect(curvature, lo, hi, xtol=1e-12, rtol=1e-12, maxiter=500))


def tighten_schedule(loss: RobustLoss, progress: float, rate: float = 1.0) -> RobustLoss:
    """
    Shrink the convex region of Flat/Skew as training progresses.

    c1 is multiplied by (1 + rate * progress); other kinds are returned as is.
    """
    if not 0.0 <= progress <= 1.0:
        raise ConfigurationError(f"progress must be in [0, 1], got {progress}")
    if rate < 0:
        raise ConfigurationError("tightening rate must be non-negative")
    if loss.kind in _CONVEX_KINDS or progress == 0.0 or rate == 0.0:
        return loss
    return replace(loss, c1=loss.c1 * (1.0 + rate * progress))
