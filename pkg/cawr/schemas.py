# SPDX-License-Identifier: MIT
"""Pydantic schemas for experiment configs and dataset records."""
import json
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, FiniteFloat, ValidationError, model_validator

from cawr.config import PROFILES
from cawr.enums import (
    DistributionKind,
    LossKind,
    NetworkKind,
    OptimizerKind,
    PriorityKind,
    StatsMode,
    TaskKind,
    TrainingMode,
)
from cawr.errors import ConfigurationError


# Dataset Schemas
class DatasetMetadata(BaseModel):
    """Provenance header of a transition dataset."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    state_dim: int = Field(..., ge=1)
    action_dim: int = Field(..., ge=1)
    epsilon: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    seed: Optional[int] = Field(default=None, ge=0)
    r_max: Optional[FiniteFloat] = None
    task: Optional[str] = None
    good_policy: Optional[str] = None
    poor_policy: Optional[str] = None
    n_episodes: Optional[int] = Field(default=None, ge=1)
    horizon: Optional[int] = Field(default=None, ge=1)
    advantage_threshold: Optional[FiniteFloat] = None


class MetaRecord(BaseModel):
    """First line of a JSONL dataset file."""

    model_config = ConfigDict(extra="forbid")

    meta: DatasetMetadata


class TransitionRecord(BaseModel):
    """One transition line of a JSONL dataset file."""

    model_config = ConfigDict(extra="forbid")

    s: List[FiniteFloat] = Field(..., min_length=1)
    a: List[FiniteFloat] = Field(..., min_length=1)
    r: FiniteFloat
    s2: List[FiniteFloat] = Field(..., min_length=1)
    done: bool

    @model_validator(mode="after")
    def _validate_dims(cls, values: "TransitionRecord"):
        if len(values.s) != len(values.s2):
            raise ValueError("s and s2 must have the same length")
        return values


# Experiment Schemas
class GeneratorSettings(BaseModel):
    """Synthetic corrupted-dataset generator."""

    model_config = ConfigDict(extra="forbid")

    task: TaskKind
    epsilon: float = Field(..., ge=0.0, le=1.0)
    n_episodes: int = Field(..., ge=1)
    horizon: int = Field(default=1, ge=1)
    seed: int = Field(default=0, ge=0)
    # bandit
    optimum: float = 1.0
    good_mean: float = 1.0
    poor_mean: float = -1.0
    action_std: float = Field(default=0.1, ge=0.0)
    # lqr
    good_gain: float = -0.618
    poor_gain: float = 0.5
    # gridworld
    grid_rows: int = Field(default=5, ge=1)
    grid_cols: int = Field(default=5, ge=2)
    slip: float = Field(default=0.1, ge=0.0, le=1.0)
    poor_policy: str = Field(default="uniform", pattern="^(uniform|reverse)$")
    gridworld_gamma: float = Field(default=0.9, gt=0.0, lt=1.0)
    advantage_threshold: float = 0.0


class DatasetSettings(BaseModel):
    """Where the offline data comes from."""

    model_config = ConfigDict(extra="forbid")

    path: Optional[str] = None
    generator: Optional[GeneratorSettings] = None

    @model_validator(mode="after")
    def _validate_source(cls, values: "DatasetSettings"):
        if (values.path is None) == (values.generator is None):
            raise ValueError("dataset needs exactly one of 'path' or 'generator'")
        return values


class LossSettings(BaseModel):
    """Policy regression loss."""

    model_config = ConfigDict(extra="forbid")

    kind: LossKind = LossKind.L2
    kappa: float = Field(default=0.2, gt=0.0)
    c1: Optional[float] = Field(default=None, gt=0.0)
    c2: Optional[float] = Field(default=None, gt=0.0)
    c3: Optional[float] = Field(default=None, gt=0.0)
    tighten_rate: float = Field(default=0.0, ge=0.0)


class PrioritySettings(BaseModel):
    """Advantage-based prioritized replay."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    kind: PriorityKind = PriorityKind.NONE
    lam: Optional[float] = Field(default=None, gt=0.0, alias="lambda")
    quantile_level: float = Field(default=0.5, gt=0.0, lt=1.0)
    odpr_scale: float = Field(default=1.0, gt=0.0)
    floor: float = Field(default=1e-6, gt=0.0)
    p_max: Optional[float] = Field(default=None, gt=0.0)
    stats_mode: StatsMode = StatsMode.BATCH
    ema_decay: float = Field(default=0.99, ge=0.0, lt=1.0)
    histogram_every: int = Field(default=0, ge=0)
    histogram_bins: int = Field(default=16, ge=1)


class NetworkSettings(BaseModel):
    """Approximator used for Q, V and the policy mean."""

    model_config = ConfigDict(extra="forbid")

    kind: NetworkKind = NetworkKind.MLP
    hidden_sizes: List[int] = Field(default_factory=lambda: [64, 64])
    state_bins: int = Field(default=10, ge=1)
    action_bins: int = Field(default=10, ge=1)

    @model_validator(mode="after")
    def _validate_hidden(cls, values: "NetworkSettings"):
        if any(size < 1 for size in values.hidden_sizes):
            raise ValueError("hidden layer sizes must be positive")
        return values


class OptimizerSettings(BaseModel):
    """Gradient step rule."""

    model_config = ConfigDict(extra="forbid")

    kind: OptimizerKind = OptimizerKind.SGD
    momentum: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    eps: float = Field(default=1e-8, gt=0.0)


class ScoreSettings(BaseModel):
    """Normalized-score constants and the optional reference line."""

    model_config = ConfigDict(extra="forbid")

    j_random: Optional[float] = None
    j_expert: Optional[float] = None
    reference_score: Optional[float] = None

    @model_validator(mode="after")
    def _validate_constants(cls, values: "ScoreSettings"):
        if (values.j_random is None) != (values.j_expert is None):
            raise ValueError("j_random and j_expert must be given together")
        if values.j_random is not None and values.j_expert <= values.j_random:
            raise ValueError("j_expert must be greater than j_random")
        return values


class ExperimentConfig(BaseModel):
    """Complete description of a training experiment."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    task: str = Field(..., min_length=1)
    dataset: DatasetSettings
    loss: LossSettings = Field(default_factory=LossSettings)
    priority: PrioritySettings = Field(default_factory=PrioritySettings)
    network: NetworkSettings = Field(default_factory=NetworkSettings)
    optimizer: OptimizerSettings = Field(default_factory=OptimizerSettings)
    score: ScoreSettings = Field(default_factory=ScoreSettings)

    lam: float = Field(default=0.2, gt=0.0, alias="lambda")
    w_max: float = Field(default=10000.0, gt=0.0)
    tau: float = Field(default=0.7, gt=0.0, lt=1.0)
    sigma: float = Field(default=math.exp(-2.0), gt=0.0)
    distribution: DistributionKind = DistributionKind.GAUSSIAN
    gamma: float = Field(default=0.99, gt=0.0, le=1.0)

    batch_size: int = Field(default=512, ge=1)
    iterations: int = Field(default=20000, ge=0)
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2], min_length=1)
    eval_every: int = Field(default=500, ge=1)
    eval_episodes: int = Field(default=10, ge=1)
    eval_horizon: int = Field(default=1000, ge=1)
    eval_stochastic: bool = False

    policy_lr: float = Field(default=3e-4, ge=0.0)
    value_lr: float = Field(default=3e-4, ge=0.0)
    q_lr: float = Field(default=3e-4, ge=0.0)
    soft_update: float = Field(default=0.005, gt=0.0, le=1.0)

    mode: TrainingMode = TrainingMode.JOINT
    pretrain_iterations: int = Field(default=0, ge=0)
    advantage_threshold: float = 0.0
    checkpoint: bool = True
    workers: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _validate_combinations(cls, values: "ExperimentConfig"):
        if values.distribution == DistributionKind.LAPLACE and values.loss.kind != LossKind.L1:
            raise ValueError("the laplace distribution is realized by the l1 loss")
        if len(set(values.seeds)) != len(values.seeds):
            raise ValueError("seeds must be unique")
        if any(seed < 0 for seed in values.seeds):
            raise ValueError("seeds must be non-negative")
        return values

    @property
    def priority_lambda(self) -> float:
        """Temperature used by the priority function."""
        return self.priority.lam if self.priority.lam is not None else self.lam

    @property
    def priority_cap(self) -> float:
        """Largest emitted priority."""
        return self.priority.p_max if self.priority.p_max is not None else self.w_max


def canonical_dict(config: ExperimentConfig) -> Dict[str, Any]:
    """Return the canonical, serializable form of a config."""
    return config.model_dump(mode="json", by_alias=True)


def parse_config(data: Union[Dict[str, Any], None]) -> ExperimentConfig:
    """
    Validate a raw mapping as an experiment config.

    Raises:
        ConfigurationError: when a key is unknown or a value is out of range
    """
    if not isinstance(data, dict):
        raise ConfigurationError("config must be a mapping")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(f"invalid experiment config: {e}") from e


def parse_config_text(content: str) -> ExperimentConfig:
    """Parse YAML, falling back to JSON, into an experiment config."""
    try:
        data = yaml.safe_load(content)
    except yaml.YAMLError:
        try:
            data = json.loads(content)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"config is neither YAML nor JSON: {e}") from e
    return parse_config(data)


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """Read an experiment config file."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    return parse_config_text(path.read_text(encoding="utf-8"))


def dump_config(config: ExperimentConfig) -> str:
    """Serialize a config to YAML in canonical form."""
    return yaml.safe_dump(canonical_dict(config), sort_keys=True)


def save_config(config: ExperimentConfig, path: Union[str, Path]) -> None:
    """Write a config next to run artifacts."""
    Path(path).write_text(dump_config(config), encoding="utf-8")


def apply_profile(config: ExperimentConfig, profile: str) -> ExperimentConfig:
    """Overlay a named profile (desk or full) onto a config."""
    if profile not in PROFILES:
        raise ConfigurationError(f"unknown profile {profile!r}; expected one of {sorted(PROFILES)}")
    data = canonical_dict(config)
    data.update(PROFILES[profile])
    return parse_config(data)


def with_updates(config: ExperimentConfig, updates: Dict[str, Any]) -> ExperimentConfig:
    """Return a validated copy with nested updates merged in."""
    data = canonical_dict(config)
    for key, value in updates.items():
        if isinstance(value, dict) and isinstance(data.get(key), dict):
            data[key] = {**data[key], **value}
        else:
            data[key] = value
    return parse_config(data)
