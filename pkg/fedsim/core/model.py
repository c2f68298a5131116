"""
Flat-parameter models, local SGD and evaluation.

Every model lives in a single float64 vector. Layers are stored in order;
each layer contributes its weight matrix (fan_in x fan_out, row-major)
followed by its bias vector. Logistic regression is the one-layer case.
"""

from dataclasses import dataclass
from typing import List, Literal, Sequence, Tuple

import numpy as np
from scipy.special import log_softmax, softmax

from fedsim.core.data import Dataset
from fedsim.core.errors import ConfigurationError, DataError, NumericalError

ModelKind = Literal["logistic-regression", "mlp"]


@dataclass(frozen=True)
class ModelSpec:
    """Layer sizes (input, hidden..., classes); hidden layers use ReLU"""
    kind: ModelKind
    layer_sizes: Tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if self.kind not in ("logistic-regression", "mlp"):
            raise ConfigurationError(f"unknown model kind {self.kind!r}")
        if len(sizes) < 2 or any(s <= 0 for s in sizes):
            raise ConfigurationError(f"invalid layer sizes {sizes}")
        if self.kind == "logistic-regression" and len(sizes) != 2:
            raise ConfigurationError("logistic regression takes exactly (features, classes)")
        if self.kind == "mlp" and len(sizes) < 3:
            raise ConfigurationError("an mlp needs at least one hidden layer")

    @classmethod
    def logistic(cls, features: int, classes: int) -> "ModelSpec":
        return cls("logistic-regression", (features, classes))

    @classmethod
    def mlp(cls, features: int, hidden: Sequence[int], classes: int) -> "ModelSpec":
        return cls("mlp", (features, *hidden, classes))

    @property
    def num_features(self) -> int:
        return self.layer_sizes[0]

    @property
    def num_classes(self) -> int:
        return self.layer_sizes[-1]

    @property
    def layer_shapes(self) -> List[Tuple[int, int]]:
        return list(zip(self.layer_sizes[:-1], self.layer_sizes[1:]))

    @property
    def dimension(self) -> int:
        return sum(fan_in * fan_out + fan_out for fan_in, fan_out in self.layer_shapes)


@dataclass(frozen=True)
class TrainingConfig:
    """Learning rate, batch size and local iterations E"""
    learning_rate: float
    batch_size: int = 32
    local_iterations: int = 1

    def __post_init__(self):
        # zero is accepted as the identity step
        if not self.learning_rate >= 0:
            raise ConfigurationError(f"learning rate must be non-negative, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch size must be >= 1, got {self.batch_size}")
        if self.local_iterations < 1:
            raise ConfigurationError(f"local iterations must be >= 1, got {self.local_iterations}")


def unflatten(theta: np.ndarray, spec: ModelSpec) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Split a flat vector into (W, b) views per layer"""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (spec.dimension,):
        raise DataError(f"parameter vector has shape {theta.shape}, spec needs ({spec.dimension},)")
    layers = []
    offset = 0
    for fan_in, fan_out in spec.layer_shapes:
        w = theta[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out)
        offset += fan_in * fan_out
        b = theta[offset:offset + fan_out]
        offset += fan_out
        layers.append((w, b))
    return layers


def flatten(layers: Sequence[Tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    return np.concatenate([np.concatenate([w.ravel(), b.ravel()]) for w, b in layers])


def init_model(spec: ModelSpec, seed: int) -> np.ndarray:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases zero"""
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out in spec.layer_shapes:
        bound = 1.0 / np.sqrt(fan_in)
        layers.append((rng.uniform(-bound, bound, size=(fan_in, fan_out)), np.zeros(fan_out)))
    return flatten(layers)


def _check_batch(features: np.ndarray, labels: np.ndarray, spec: ModelSpec) -> None:
    if features.ndim != 2 or features.shape[0] == 0:
        raise DataError("batch must contain at least one sample")
    if features.shape[1] != spec.num_features:
        raise DataError(f"batch has {features.shape[1]} features, spec expects {spec.num_features}")
    if labels.shape[0] != features.shape[0]:
        raise DataError("batch labels and features disagree in length")
    if labels.min() < 0 or labels.max() >= spec.num_classes:
        raise DataError(f"label outside [0, {spec.num_classes})")


def _forward(layers, features: np.ndarray):
    """Returns logits and the per-layer inputs needed for backprop"""
    activations = [features]
    h = features
    for i, (w, b) in enumerate(layers):
        z = h @ w + b
        if i < len(layers) - 1:
            h = np.maximum(z, 0.0)
            activations.append(h)
        else:
            h = z
    return h, activations


def logits(theta: np.ndarray, features: np.ndarray, spec: ModelSpec) -> np.ndarray:
    out, _ = _forward(unflatten(theta, spec), np.asarray(features, dtype=np.float64))
    return out


def loss_and_gradient(theta: np.ndarray, features: np.ndarray, labels: np.ndarray,
                      spec: ModelSpec) -> Tuple[float, np.ndarray]:
    """Mean softmax cross-entropy over the batch and its gradient w.r.t. theta"""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    _check_batch(features, labels, spec)

    layers = unflatten(theta, spec)
    out, activations = _forward(layers, features)
    n = features.shape[0]
    log_probs = log_softmax(out, axis=1)
    loss = -float(np.mean(log_probs[np.arange(n), labels]))

    delta = softmax(out, axis=1)
    delta[np.arange(n), labels] -= 1.0
    delta /= n

    grads = [None] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        a = activations[i]
        grads[i] = (a.T @ delta, delta.sum(axis=0))
        if i > 0:
            delta = (delta @ w.T) * (activations[i] > 0)
    return max(loss, 0.0), flatten(grads)


def local_update(theta: np.ndarray, shard: Dataset, cfg: TrainingConfig, spec: ModelSpec,
                 rng: np.random.Generator) -> np.ndarray:
    """
    E mini-batch SGD steps from theta; returns the full local model phi.

    The shard is reshuffled once per call and consumed in consecutive
    batches without replacement, reshuffling again when exhausted.
    """
    if len(shard) < 1:
        raise DataError("cannot train on an empty shard")
    if not np.all(np.isfinite(theta)):
        raise NumericalError("broadcast model is not finite")

    phi = np.array(theta, dtype=np.float64, copy=True)
    n = len(shard)
    batch = min(cfg.batch_size, n)
    order = rng.permutation(n)
    cursor = 0
    for _ in range(cfg.local_iterations):
        if cursor + batch > n:
            order = rng.permutation(n)
            cursor = 0
        idx = order[cursor:cursor + batch]
        cursor += batch
        _, grad = loss_and_gradient(phi, shard.features[idx], shard.labels[idx], spec)
        phi -= cfg.learning_rate * grad

    if not np.all(np.isfinite(phi)):
        raise NumericalError("local training diverged (non-finite parameters)")
    return phi


def predict(theta: np.ndarray, features: np.ndarray, spec: ModelSpec) -> np.ndarray:
    # np.argmax returns the first maximum: ties go to the lowest class index
    return np.argmax(logits(theta, features, spec), axis=1)


def evaluate(theta: np.ndarray, test: Dataset, spec: ModelSpec) -> float:
    """Fraction of argmax-correct predictions"""
    if len(test) == 0:
        raise DataError("cannot evaluate on an empty test set")
    if test.dim != spec.num_features:
        raise DataError(f"test set has {test.dim} features, spec expects {spec.num_features}")
    return float(np.mean(predict(theta, test.features, spec) == test.labels))


__all__ = [
    "ModelSpec",
    "TrainingConfig",
    "init_model",
    "flatten",
    "unflatten",
    "logits",
    "loss_and_gradient",
    "local_update",
    "predict",
    "evaluate",
]
