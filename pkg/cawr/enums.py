# SPDX-License-Identifier: MIT
"""String enums used in configs, checkpoints and reports."""
import enum


class LossKind(str, enum.Enum):
    """Member of the robust regression loss family."""

    L2 = "l2"
    L1 = "l1"
    HUBER = "huber"
    FLAT = "flat"
    SKEW = "skew"


class PriorityKind(str, enum.Enum):
    """Priority function h applied to advantages."""

    NONE = "none"
    CONSTANT = "constant"
    EXP_STANDARD = "standard"
    EXP_NORMAL = "normal"
    EXP_QUANTILE = "quantile"
    ODPR = "odpr"
    AW = "aw"


class DistributionKind(str, enum.Enum):
    """Fixed-scale policy distribution."""

    GAUSSIAN = "gaussian"
    LAPLACE = "laplace"


class TaskKind(str, enum.Enum):
    """Environments the dataset generator and evaluator know about."""

    BANDIT = "bandit"
    LQR = "lqr"
    GRIDWORLD = "gridworld"


class NetworkKind(str, enum.Enum):
    """Function approximator parameterization."""

    MLP = "mlp"
    LINEAR = "linear"
    TABULAR = "tabular"


class OptimizerKind(str, enum.Enum):
    """Parameter update rule."""

    SGD = "sgd"
    MOMENTUM = "momentum"
    ADAM = "adam"


class StatsMode(str, enum.Enum):
    """How advantage statistics for priorities are refreshed."""

    BATCH = "batch"
    EMA = "ema"


class TrainingMode(str, enum.Enum):
    """Joint advantage/policy learning or advantage pre-training first."""

    JOINT = "joint"
    PRETRAINED = "pretrained"
