"""Desk-scale differentiable classifiers trained with plain SGD.

Two architectures share one flat float64 parameter vector: softmax (logistic)
regression and a one-hidden-layer ReLU MLP. Everything runs in double
precision so reference comparisons hold to 1e-12, and every function is pure:
inputs are never mutated, which makes concurrent per-client training safe.

Flat vector layout (row-major):
    logistic:  W (input_dim, num_classes), b (num_classes,)
    MLP:       W1 (input_dim, hidden), b1 (hidden,),
               W2 (hidden, num_classes), b2 (num_classes,)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class ModelSpec:
    """Architecture descriptor; hidden_units == 0 selects logistic regression."""

    input_dim: int
    num_classes: int
    hidden_units: int = 0
    activation: str = "relu"

    def __post_init__(self):
        if self.input_dim < 1:
            raise ConfigurationError("model: input_dim must be >= 1")
        if self.num_classes < 2:
            raise ConfigurationError("model: num_classes must be >= 2")
        if self.hidden_units < 0:
            raise ConfigurationError("model: hidden_units must be >= 0")
        if self.activation != "relu":
            raise ConfigurationError(f"model: unsupported activation {self.activation!r}")

    def layer_shapes(self) -> tuple[tuple[int, ...], ...]:
        """Array shapes in flat-vector order."""
        if self.hidden_units == 0:
            return ((self.input_dim, self.num_classes), (self.num_classes,))
        return (
            (self.input_dim, self.hidden_units),
            (self.hidden_units,),
            (self.hidden_units, self.num_classes),
            (self.num_classes,),
        )

    def param_count(self) -> int:
        return int(sum(np.prod(s) for s in self.layer_shapes()))


@dataclass
class Parameters:
    """Flat float64 vector holding all model weights."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ConfigurationError("parameters must be a flat vector")

    @property
    def size(self) -> int:
        return self.values.size

    def copy(self) -> "Parameters":
        return Parameters(self.values.copy())


@dataclass(frozen=True)
class TrainerConfig:
    """Local SGD settings: step size, epoch count, batch size (None = full batch).

    A zero learning rate is accepted here (useful as a no-op diagnostic); the
    config layer requires a strictly positive rate for real runs.
    """

    learning_rate: float
    local_epochs: int = 5
    batch_size: int | None = None

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigurationError("trainer: learning_rate must be >= 0")
        if self.local_epochs < 1:
            raise ConfigurationError("trainer: local_epochs must be >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigurationError("trainer: batch_size must be >= 1 or null for full batch")


def _unpack(values: np.ndarray, spec: ModelSpec) -> list[np.ndarray]:
    """Views (no copies) of the per-layer arrays inside the flat vector."""
    if values.size != spec.param_count():
        raise ConfigurationError(
            f"parameter vector has length {values.size}, model needs {spec.param_count()}"
        )
    arrays = []
    offset = 0
    for shape in spec.layer_shapes():
        n = int(np.prod(shape))
        arrays.append(values[offset : offset + n].reshape(shape))
        offset += n
    return arrays


def zeros_params(spec: ModelSpec) -> Parameters:
    return Parameters(np.zeros(spec.param_count()))


def init_params(spec: ModelSpec, seed) -> Parameters:
    """Per-layer uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)], seeded."""
    rng = np.random.default_rng(seed)
    shapes = spec.layer_shapes()
    chunks = []
    for w_shape, b_shape in zip(shapes[0::2], shapes[1::2]):
        bound = 1.0 / np.sqrt(w_shape[0])
        chunks.append(rng.uniform(-bound, bound, size=int(np.prod(w_shape))))
        chunks.append(rng.uniform(-bound, bound, size=b_shape[0]))
    return Parameters(np.concatenate(chunks))


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _logits(values: np.ndarray, spec: ModelSpec, x: np.ndarray) -> np.ndarray:
    if spec.hidden_units == 0:
        w, b = _unpack(values, spec)
        return x @ w + b
    w1, b1, w2, b2 = _unpack(values, spec)
    hidden = np.maximum(x @ w1 + b1, 0.0)
    return hidden @ w2 + b2


def _check_batch(spec: ModelSpec, x: np.ndarray, y: np.ndarray | None) -> None:
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ConfigurationError(
            f"feature matrix has shape {x.shape}, model expects (*, {spec.input_dim})"
        )
    if y is not None:
        if len(y) != len(x):
            raise ValueError("features and labels differ in length")
        if len(y) and (y.min() < 0 or y.max() >= spec.num_classes):
            raise ValueError("label outside [0, num_classes)")


def forward(params: Parameters, spec: ModelSpec, x) -> np.ndarray:
    """Class-probability vector for a single input; entries sum to 1."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (spec.input_dim,):
        raise ConfigurationError(
            f"input has shape {x.shape}, model expects ({spec.input_dim},)"
        )
    return predict_proba(params, spec, x[None, :])[0]


def predict_proba(params: Parameters, spec: ModelSpec, x: np.ndarray) -> np.ndarray:
    """Row-wise class probabilities for a batch of inputs, shape (n, num_classes)."""
    x = np.asarray(x, dtype=np.float64)
    _check_batch(spec, x, None)
    return np.exp(_log_softmax(_logits(params.values, spec, x)))


def predict(params: Parameters, spec: ModelSpec, x: np.ndarray) -> np.ndarray:
    """Argmax class per row; ties resolve to the lowest class index."""
    return np.argmax(predict_proba(params, spec, x), axis=1)


def loss_and_gradient(
    params: Parameters, spec: ModelSpec, x: np.ndarray, y: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its exact analytic gradient (flat)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(x) == 0:
        raise ValueError("empty batch")
    _check_batch(spec, x, y)
    return _loss_grad(params.values, spec, x, y)


def _loss_grad(values, spec, x, y):
    n = len(x)
    grad = np.empty_like(values)
    if spec.hidden_units == 0:
        w, b = _unpack(values, spec)
        logp = _log_softmax(x @ w + b)
        loss = -logp[np.arange(n), y].mean()
        dz = np.exp(logp)
        dz[np.arange(n), y] -= 1.0
        dz /= n
        gw, gb = _unpack(grad, spec)
        gw[:] = x.T @ dz
        gb[:] = dz.sum(axis=0)
    else:
        w1, b1, w2, b2 = _unpack(values, spec)
        z1 = x @ w1 + b1
        a1 = np.maximum(z1, 0.0)
        logp = _log_softmax(a1 @ w2 + b2)
        loss = -logp[np.arange(n), y].mean()
        dz2 = np.exp(logp)
        dz2[np.arange(n), y] -= 1.0
        dz2 /= n
        da1 = dz2 @ w2.T
        dz1 = da1 * (z1 > 0.0)
        gw1, gb1, gw2, gb2 = _unpack(grad, spec)
        gw1[:] = x.T @ dz1
        gb1[:] = dz1.sum(axis=0)
        gw2[:] = a1.T @ dz2
        gb2[:] = dz2.sum(axis=0)
    return float(loss), grad


def local_train(
    params: Parameters,
    spec: ModelSpec,
    x: np.ndarray,
    y: np.ndarray,
    cfg: TrainerConfig,
    seed,
) -> Parameters:
    """Run cfg.local_epochs of SGD from a copy of `params` and return the result.

    Full batch (batch_size None or >= n) visits the data in stored order and
    consumes no randomness; mini-batches reshuffle once per epoch from `seed`.
    The input parameters are never mutated.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(x) == 0:
        raise ValueError("empty shard")
    _check_batch(spec, x, y)
    n = len(x)
    values = params.values.copy()
    full = cfg.batch_size is None or cfg.batch_size >= n
    rng = None if full else np.random.default_rng(seed)
    for _ in range(cfg.local_epochs):
        if full:
            _, grad = _loss_grad(values, spec, x, y)
            values -= cfg.learning_rate * grad
        else:
            order = rng.permutation(n)
            for start in range(0, n, cfg.batch_size):
                idx = order[start : start + cfg.batch_size]
                _, grad = _loss_grad(values, spec, x[idx], y[idx])
                values -= cfg.learning_rate * grad
    if not np.isfinite(values).all():
        raise FloatingPointError("local training produced non-finite parameters")
    return Parameters(values)


def evaluate_accuracy(params: Parameters, spec: ModelSpec, x: np.ndarray, y: np.ndarray) -> float:
    """Fraction of argmax-correct predictions on a non-empty test set."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(x) == 0:
        raise ValueError("empty test set")
    _check_batch(spec, x, y)
    return float(np.mean(predict(params, spec, x) == y))
