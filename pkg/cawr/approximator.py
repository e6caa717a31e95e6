# SPDX-License-Identifier: MIT
"""Small differentiable approximators with reverse-mode gradients."""
import abc
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from packaging import version

from cawr.discretize import discretizer_from_dict
from cawr.enums import NetworkKind, OptimizerKind
from cawr.errors import ConfigurationError, DataValidationError, StaleTapeError, TrainingAbortedError

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "1.0"

Shape = Tuple[int, ...]


@dataclass(frozen=True, eq=False)
class ParamVector:
    """Flat parameter array with its layer shapes and an update counter."""

    values: np.ndarray
    shapes: Tuple[Shape, ...]
    version: int = 0

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True).reshape(-1)
        shapes = tuple(tuple(int(d) for d in shape) for shape in self.shapes)
        expected = int(sum(int(np.prod(shape)) for shape in shapes))
        if values.size != expected:
            raise DataValidationError(f"parameter vector has {values.size} entries, shapes need {expected}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "shapes", shapes)

    @classmethod
    def from_arrays(cls, arrays: Sequence[np.ndarray], version: int = 0) -> "ParamVector":
        arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
        flat = np.concatenate([a.reshape(-1) for a in arrays]) if arrays else np.zeros(0)
        return cls(flat, tuple(a.shape for a in arrays), version)

    @property
    def size(self) -> int:
        return int(self.values.size)

    @property
    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def arrays(self) -> List[np.ndarray]:
        """Read-only views, one per layer shape."""
        out = []
        start = 0
        for shape in self.shapes:
            count = int(np.prod(shape))
            out.append(self.values[start:start + count].reshape(shape))
            start += count
        return out

    def with_values(self, values: np.ndarray, version: Optional[int] = None) -> "ParamVector":
        return ParamVector(values, self.shapes, self.version + 1 if version is None else version)

    def same_shape(self, other: "ParamVector") -> bool:
        return self.shapes == other.shapes


@dataclass(frozen=True, eq=False)
class Tape:
    """Activations recorded by forward for one parameter set."""

    params: ParamVector
    cache: Tuple[Any, ...]
    single: bool


class Approximator(abc.ABC):
    """Value-semantic function approximator."""

    kind: NetworkKind
    input_dim: int
    output_dim: int
    params: ParamVector

    def _as_batch(self, x) -> Tuple[np.ndarray, bool]:
        arr = np.asarray(x, dtype=np.float64)
        single = arr.ndim == 1
        if single:
            arr = arr[None, :]
        if arr.ndim != 2 or arr.shape[1] != self.input_dim:
            raise DataValidationError(f"expected input dimension {self.input_dim}, got shape {np.shape(x)}")
        return arr, single

    def _check_tape(self, tape: Tape) -> None:
        if tape.params is not self.params:
            raise StaleTapeError(
                f"tape recorded at parameter version {tape.params.version}, "
                f"net is at version {self.params.version}"
            )

    def _as_grad(self, tape: Tape, grad_output) -> np.ndarray:
        g = np.asarray(grad_output, dtype=np.float64)
        if g.ndim == 1 and tape.single:
            g = g[None, :]
        rows = tape.cache[0].shape[0]
        if g.shape != (rows, self.output_dim):
            raise DataValidationError(f"output gradient must have shape {(rows, self.output_dim)}, got {g.shape}")
        return g

    @abc.abstractmethod
    def forward(self, x) -> Tuple[np.ndarray, Tape]:
        """Outputs for a vector or a batch, plus the tape for backward."""

    @abc.abstractmethod
    def backward(self, tape: Tape, grad_output) -> ParamVector:
        """Parameter gradient of sum(grad_output * output) over the batch."""

    @abc.abstractmethod
    def with_params(self, params: ParamVector) -> "Approximator":
        """Same architecture, new parameters."""

    @abc.abstractmethod
    def spec(self) -> Dict[str, Any]:
        """Architecture description stored in checkpoints."""

    def __call__(self, x) -> np.ndarray:
        return self.forward(x)[0]


class MLP(Approximator):
    """Dense layers with tanh hidden activations and a linear output."""

    kind = NetworkKind.MLP

    def __init__(
        self,
        input_dim: int,
        output_dim: int,
        hidden_sizes: Sequence[int] = (64, 64),
        params: Optional[ParamVector] = None,
        seed: int = 0,
    ):
        if input_dim < 1 or output_dim < 1:
            raise ConfigurationError("network dimensions must be positive")
        self.input_dim = int(input_dim)
        self.output_dim = int(output_dim)
        self.hidden_sizes = [int(h) for h in hidden_sizes]
        sizes = [self.input_dim] + self.hidden_sizes + [self.output_dim]
        shapes: List[Shape] = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            shapes += [(fan_in, fan_out), (fan_out,)]
        if params is None:
            rng = np.random.default_rng(seed)
            arrays = []
            for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
                arrays.append(rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in))
                arrays.append(np.zeros(fan_out))
            params = ParamVector.from_arrays(arrays)
        if params.shapes != tuple(shapes):
            raise DataValidationError(f"parameter shapes {params.shapes} do not match architecture {shapes}")
        self.params = params

    @property
    def n_layers(self) -> int:
        return len(self.hidden_sizes) + 1

    def forward(self, x) -> Tuple[np.ndarray, Tape]:
        h, single = self._as_batch(x)
        arrays = self.params.arrays()
        inputs = []
        for layer in range(self.n_layers):
            W, b = arrays[2 * layer], arrays[2 * layer + 1]
            inputs.append(h)
            z = h @ W + b
            h = np.tanh(z) if layer < self.n_layers - 1 else z
        tape = Tape(self.params, tuple(inputs), single)
        return (h[0] if single else h), tape

    def backward(self, tape: Tape, grad_output) -> ParamVector:
        self._check_tape(tape)
        g = self._as_grad(tape, grad_output)
        arrays = self.params.arrays()
        grads: List[np.ndarray] = [None] * len(arrays)
        for layer in reversed(range(self.n_layers)):
            h_in = tape.cache[layer]
            W = arrays[2 * layer]
            grads[2 * layer] = h_in.T @ g
            grads[2 * layer + 1] = g.sum(axis=0)
            if layer > 0:
                # h_in is the tanh output of the previous layer
                g = (g @ W.T) * (1.0 - h_in ** 2)
        return ParamVector.from_arrays(grads, version=self.params.version)

    def with_params(self, params: ParamVector) -> "MLP":
        return MLP(self.input_dim, self.output_dim, self.hidden_sizes, params=params)

    def spec(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
            "hidden_sizes": list(self.hidden_sizes),
        }


class LinearNet(MLP):
    """Single affine layer."""

    kind = NetworkKind.LINEAR

    def __init__(self, input_dim: int, output_dim: int, params: Optional[ParamVector] = None, seed: int = 0):
        super().__init__(input_dim, output_dim, hidden_sizes=(), params=params, seed=seed)

    @classmethod
    def identity(cls, dim: int) -> "LinearNet":
        return cls(dim, dim, params=ParamVector.from_arrays([np.eye(dim), np.zeros(dim)]))

    def with_params(self, params: ParamVector) -> "LinearNet":
        return LinearNet(self.input_dim, self.output_dim, params=params)

    def spec(self) -> Dict[str, Any]:
        return {"kind": self.kind.value, "input_dim": self.input_dim, "output_dim": self.output_dim}


class TabularNet(Approximator):
    """Lookup table indexed by a discretizer."""

    kind = NetworkKind.TABULAR

    def __init__(self, discretizer, output_dim: int, params: Optional[ParamVector] = None, init: float = 0.0):
        self.discretizer = discretizer
        self.input_dim = int(discretizer.dim)
        self.output_dim = int(output_dim)
        shape = (int(discretizer.n_cells), self.output_dim)
        if params is None:
            params = ParamVector.from_arrays([np.full(shape, float(init))])
        if params.shapes != (shape,):
            raise DataValidationError(f"table shape {params.shapes} does not match {shape}")
        self.params = params

    @property
    def table(self) -> np.ndarray:
        return self.params.arrays()[0]

    def forward(self, x) -> Tuple[np.ndarray, Tape]:
        batch, single = self._as_batch(x)
        cells = self.discretizer.index(batch)
        out = self.table[cells]
        tape = Tape(self.params, (batch, cells), single)
        return (out[0] if single else out), tape

    def backward(self, tape: Tape, grad_output) -> ParamVector:
        self._check_tape(tape)
        g = self._as_grad(tape, grad_output)
        grad = np.zeros_like(self.table)
        np.add.at(grad, tape.cache[1], g)
        return ParamVector.from_arrays([grad], version=self.params.version)

    def with_params(self, params: ParamVector) -> "TabularNet":
        return TabularNet(self.discretizer, self.output_dim, params=params)

    def spec(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "output_dim": self.output_dim,
            "discretizer": self.discretizer.to_dict(),
        }


def net_from_spec(spec: Dict[str, Any], params: Optional[ParamVector] = None, seed: int = 0) -> Approximator:
    """Rebuild an approximator from ``spec()`` output."""
    kind = NetworkKind(spec["kind"])
    if kind == NetworkKind.MLP:
        return MLP(spec["input_dim"], spec["output_dim"], spec["hidden_sizes"], params=params, seed=seed)
    if kind == NetworkKind.LINEAR:
        return LinearNet(spec["input_dim"], spec["output_dim"], params=params, seed=seed)
    return TabularNet(discretizer_from_dict(spec["discretizer"]), spec["output_dim"], params=params)


def make_network(settings, input_dim: int, output_dim: int, seed: int = 0, discretizer=None) -> Approximator:
    """Build the approximator described by a NetworkSettings model."""
    if settings.kind == NetworkKind.MLP:
        return MLP(input_dim, output_dim, settings.hidden_sizes, seed=seed)
    if settings.kind == NetworkKind.LINEAR:
        return LinearNet(input_dim, output_dim, seed=seed)
    if discretizer is None:
        raise ConfigurationError("a tabular network needs a discretizer")
    if discretizer.dim != input_dim:
        raise ConfigurationError(f"discretizer covers {discretizer.dim} inputs, network takes {input_dim}")
    return TabularNet(discretizer, output_dim)


# Optimizers
def _checked_grads(params: ParamVector, grads: ParamVector) -> np.ndarray:
    if not params.same_shape(grads):
        raise DataValidationError(f"gradient shapes {grads.shapes} do not match parameters {params.shapes}")
    g = grads.values
    if not np.all(np.isfinite(g)):
        bad = int(np.flatnonzero(~np.isfinite(g))[0])
        raise TrainingAbortedError(f"non-finite gradient at parameter {bad}", iteration=params.version)
    return g


def _stepped(params: ParamVector, values: np.ndarray) -> ParamVector:
    if not np.all(np.isfinite(values)):
        raise TrainingAbortedError("parameters overflowed", iteration=params.version)
    return params.with_values(values)


def sgd_step(params: ParamVector, grads: ParamVector, lr: float) -> ParamVector:
    """p' = p - lr * g, stamped with the next version."""
    g = _checked_grads(params, grads)
    return _stepped(params, params.values - lr * g)


class Optimizer:
    """Plain stochastic gradient descent; subclasses keep extra state."""

    def __init__(self, lr: float):
        if lr < 0:
            raise ConfigurationError("learning rate must be non-negative")
        self.lr = float(lr)

    def step(self, params: ParamVector, grads: ParamVector) -> ParamVector:
        return sgd_step(params, grads, self.lr)


class MomentumOptimizer(Optimizer):
    """Heavy-ball momentum: v = beta v + g; p' = p - lr v."""

    def __init__(self, lr: float, beta: float = 0.9):
        super().__init__(lr)
        self.beta = beta
        self._velocity: Optional[np.ndarray] = None

    def step(self, params: ParamVector, grads: ParamVector) -> ParamVector:
        g = _checked_grads(params, grads)
        if self._velocity is None:
            self._velocity = np.zeros_like(g)
        self._velocity = self.beta * self._velocity + g
        return _stepped(params, params.values - self.lr * self._velocity)


class AdamOptimizer(Optimizer):
    """Adam with bias-corrected moment estimates."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        super().__init__(lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._m: Optional[np.ndarray] = None
        self._v: Optional[np.ndarray] = None
        self._t = 0

    def step(self, params: ParamVector, grads: ParamVector) -> ParamVector:
        g = _checked_grads(params, grads)
        if self._m is None:
            self._m = np.zeros_like(g)
            self._v = np.zeros_like(g)
        self._t += 1
        self._m = self.beta1 * self._m + (1.0 - self.beta1) * g
        self._v = self.beta2 * self._v + (1.0 - self.beta2) * g ** 2
        m_hat = self._m / (1.0 - self.beta1 ** self._t)
        v_hat = self._v / (1.0 - self.beta2 ** self._t)
        return _stepped(params, params.values - self.lr * m_hat / (np.sqrt(v_hat) + self.eps))


def make_optimizer(settings, lr: float) -> Optimizer:
    """Build the optimizer described by an OptimizerSettings model."""
    if settings.kind == OptimizerKind.MOMENTUM:
        return MomentumOptimizer(lr, settings.momentum)
    if settings.kind == OptimizerKind.ADAM:
        return AdamOptimizer(lr, settings.beta1, settings.beta2, settings.eps)
    return Optimizer(lr)


# Checkpoints
def save_checkpoint(path: Union[str, Path], net: Approximator, extra: Optional[Dict[str, Any]] = None) -> Path:
    """Write a JSON checkpoint with a shape header and version stamp."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format_version": CHECKPOINT_FORMAT,
        "net": net.spec(),
        "param_version": net.params.version,
        "shapes": [list(shape) for shape in net.params.shapes],
        "values": net.params.values.tolist(),
        "extra": extra or {},
    }
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[Approximator, Dict[str, Any]]:
    """
    Read a checkpoint written by ``save_checkpoint``.

    Raises:
        ConfigurationError: if the file is missing or has an incompatible format
    """
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"checkpoint not found: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"checkpoint {path} is not valid JSON: {e}") from e
    found = version.parse(str(payload.get("format_version", "0")))
    if found.major != version.parse(CHECKPOINT_FORMAT).major:
        raise ConfigurationError(f"checkpoint format {found} is not compatible with {CHECKPOINT_FORMAT}")
    params = ParamVector(
        np.asarray(payload["values"], dtype=np.float64),
        tuple(tuple(shape) for shape in payload["shapes"]),
        int(payload["param_version"]),
    )
    if not params.is_finite:
        raise ConfigurationError(f"checkpoint {path} holds non-finite parameters")
    return net_from_spec(payload["net"], params=params), payload.get("extra", {})
