"""Dense feed-forward networks with explicit traces and analytic backprop.

Plays two roles: the target classifier trained by every approach, and the
building block of all attack networks. Weights fold the bias into an extra
input row, so a layer mapping a to b is a (a+1) x b matrix; parameter counts
therefore match the communication-cost arithmetic used elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericError

HIDDEN_ACTIVATIONS = ("tanh", "relu")


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths (input, hidden..., output) plus the hidden activation.

    The output activation is always softmax; the output width is the number
    of classes.
    """

    layer_widths: tuple[int, ...]
    hidden_activation: str = "tanh"

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        if len(self.layer_widths) < 2:
            raise DomainError("need at least input and output widths")
        if any(w < 1 for w in self.layer_widths):
            raise DomainError(f"all layer widths must be >= 1, got {self.layer_widths}")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise DomainError(f"unknown hidden activation {self.hidden_activation!r}")

    @property
    def input_dim(self) -> int:
        return self.layer_widths[0]

    @property
    def num_classes(self) -> int:
        return self.layer_widths[-1]

    @property
    def num_layers(self) -> int:
        """Number of weight layers (transformations), not width entries."""
        return len(self.layer_widths) - 1

    @property
    def param_count(self) -> int:
        widths = self.layer_widths
        return sum((widths[i] + 1) * widths[i + 1] for i in range(len(widths) - 1))


@dataclass(frozen=True)
class MlpModel:
    spec: MlpSpec
    weights: tuple[np.ndarray, ...]

    def __post_init__(self):
        widths = self.spec.layer_widths
        if len(self.weights) != self.spec.num_layers:
            raise DomainError("weight count does not match spec")
        for i, w in enumerate(self.weights):
            expected = (widths[i] + 1, widths[i + 1])
            if w.shape != expected:
                raise DomainError(f"layer {i}: expected shape {expected}, got {w.shape}")
            if not np.isfinite(w).all():
                raise NumericError(f"layer {i}: non-finite weight entries")
            w.setflags(write=False)

    @property
    def param_count(self) -> int:
        return self.spec.param_count

    @property
    def num_layers(self) -> int:
        return self.spec.num_layers


@dataclass(frozen=True)
class ForwardTrace:
    """Hidden activations, softmax output, and (when a label is given) loss."""

    activations: tuple[np.ndarray, ...]
    output: np.ndarray
    loss: float | None = None


@dataclass(frozen=True)
class Gradients:
    layers: tuple[np.ndarray, ...]

    def max_abs(self) -> float:
        return max(float(np.max(np.abs(g))) for g in self.layers)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    learning_rate: float
    batch_size: int | None = None  # None = full batch
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise DomainError("epochs must be >= 0")
        if self.learning_rate <= 0:
            raise DomainError("learning_rate must be > 0")
        if self.batch_size is not None and self.batch_size < 1:
            raise DomainError("batch_size must be >= 1")


def one_hot(label: int, num_classes: int) -> np.ndarray:
    if not 0 <= label < num_classes:
        raise DomainError(f"label {label} out of range for {num_classes} classes")
    v = np.zeros(num_classes)
    v[label] = 1.0
    return v


def init_mlp(spec: MlpSpec, seed: int) -> MlpModel:
    """Seeded uniform init on [-1/sqrt(fan_in), 1/sqrt(fan_in)].

    fan_in counts the bias row, i.e. the number of rows of the matrix.
    """
    rng = np.random.default_rng(seed)
    widths = spec.layer_widths
    weights = []
    for i in range(len(widths) - 1):
        fan_in = widths[i] + 1
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, widths[i + 1])))
    return MlpModel(spec=spec, weights=tuple(weights))


def zero_mlp(spec: MlpSpec) -> MlpModel:
    widths = spec.layer_widths
    return MlpModel(
        spec=spec,
        weights=tuple(np.zeros((widths[i] + 1, widths[i + 1])) for i in range(len(widths) - 1)),
    )


def _augment(x: np.ndarray) -> np.ndarray:
    # appends the constant-1 column that multiplies the bias row
    return np.concatenate([x, np.ones((x.shape[0], 1))], axis=1)


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "tanh":
        return np.tanh(z)
    return np.maximum(z, 0.0)


def _activate_grad(a: np.ndarray, z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "tanh":
        return 1.0 - a * a
    return (z > 0).astype(z.dtype)


def forward_batch(model: MlpModel, records: np.ndarray):
    """Run the full forward pass on a (batch, input_dim) matrix.

    Returns (hidden activations per layer, log-probabilities, probabilities).
    Cross-entropy is taken in log space, so losses stay finite for
    under-flowing probabilities.
    """
    records = np.asarray(records, dtype=float)
    if records.ndim != 2 or records.shape[1] != model.spec.input_dim:
        raise DomainError(
            f"records must be (batch, {model.spec.input_dim}), got {records.shape}"
        )
    act = model.spec.hidden_activation
    hidden = []
    a = records
    for w in model.weights[:-1]:
        z = _augment(a) @ w
        a = _activate(z, act)
        hidden.append(a)
    logits = _augment(a) @ model.weights[-1]
    if not np.isfinite(logits).all():
        raise NumericError("non-finite logits in forward pass")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return hidden, log_probs, np.exp(log_probs)


def forward(model: MlpModel, record: np.ndarray, label: int | None = None) -> ForwardTrace:
    record = np.asarray(record, dtype=float)
    if record.ndim != 1:
        raise DomainError("record must be a 1-D feature vector")
    hidden, log_probs, probs = forward_batch(model, record[None, :])
    loss = None
    if label is not None:
        if not 0 <= label < model.spec.num_classes:
            raise DomainError(f"label {label} out of range")
        loss = float(-log_probs[0, label])
    return ForwardTrace(
        activations=tuple(h[0] for h in hidden),
        output=probs[0],
        loss=loss,
    )


def batch_gradients(
    model: MlpModel,
    records: np.ndarray,
    labels: np.ndarray,
    weights: np.ndarray | None = None,
    return_input_grad: bool = False,
):
    """Gradients of the per-record-weighted mean cross-entropy over a batch.

    The batch loss is (1/B) * sum_j weights[j] * CE_j, so gradients are
    homogeneous in the weights. Returns (Gradients, loss) or
    (Gradients, loss, dloss/dinput) when return_input_grad is set.
    """
    records = np.asarray(records, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n = records.shape[0]
    if n == 0:
        raise DomainError("empty batch")
    if labels.shape != (n,):
        raise DomainError("labels must be one per record")
    if labels.min() < 0 or labels.max() >= model.spec.num_classes:
        raise DomainError("label out of range")
    if weights is None:
        weights = np.ones(n)
    else:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (n,) or (weights < 0).any():
            raise DomainError("weights must be one nonnegative scalar per record")

    act = model.spec.hidden_activation
    pre = []
    layer_inputs = [records]
    a = records
    for w in model.weights[:-1]:
        z = _augment(a) @ w
        pre.append(z)
        a = _activate(z, act)
        layer_inputs.append(a)
    logits = _augment(a) @ model.weights[-1]
    if not np.isfinite(logits).all():
        raise NumericError("non-finite logits in forward pass")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    probs = np.exp(log_probs)
    loss = float(-(weights * log_probs[np.arange(n), labels]).sum() / n)

    onehots = np.zeros_like(probs)
    onehots[np.arange(n), labels] = 1.0
    delta = (probs - onehots) * (weights / n)[:, None]
    grads: list[np.ndarray] = [None] * model.num_layers
    for i in range(model.num_layers - 1, -1, -1):
        grads[i] = _augment(layer_inputs[i]).T @ delta
        if i > 0:
            upstream = delta @ model.weights[i][:-1].T
            delta = upstream * _activate_grad(layer_inputs[i], pre[i - 1], act)
        else:
            delta = delta @ model.weights[0][:-1].T
    result = Gradients(layers=tuple(grads))
    if return_input_grad:
        return result, loss, delta
    return result, loss


def backward(model: MlpModel, record: np.ndarray, label: int) -> Gradients:
    """Analytic gradient of the single-record cross-entropy loss."""
    record = np.asarray(record, dtype=float)
    if record.ndim != 1:
        raise DomainError("record must be a 1-D feature vector")
    grads, _ = batch_gradients(model, record[None, :], np.array([label]))
    return grads


def gd_step(model: MlpModel, gradients: Gradients, learning_rate: float) -> MlpModel:
    if learning_rate <= 0:
        raise DomainError("learning_rate must be > 0")
    if len(gradients.layers) != model.num_layers:
        raise DomainError("gradient layer count does not match model")
    for w, g in zip(model.weights, gradients.layers):
        if w.shape != g.shape:
            raise DomainError(f"gradient shape {g.shape} does not match weights {w.shape}")
    new_weights = tuple(
        w - learning_rate * g for w, g in zip(model.weights, gradients.layers)
    )
    return MlpModel(spec=model.spec, weights=new_weights)


def train(
    model: MlpModel,
    records: np.ndarray,
    labels: np.ndarray,
    weights: np.ndarray | None = None,
    config: TrainConfig = TrainConfig(epochs=1, learning_rate=0.1),
) -> MlpModel:
    """Mini-batch (or full-batch) gradient descent on weighted cross-entropy.

    Deterministic for a fixed seed: the per-epoch shuffle comes from a
    generator seeded with config.seed. Full-batch mode skips shuffling so
    identical datasets give bitwise-identical trajectories.
    """
    records = np.asarray(records, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n = records.shape[0]
    if n == 0:
        raise DomainError("cannot train on an empty dataset")
    if weights is None:
        weights = np.ones(n)
    else:
        weights = np.asarray(weights, dtype=float)
    batch = config.batch_size
    full_batch = batch is None or batch >= n
    rng = np.random.default_rng(config.seed)
    for _ in range(config.epochs):
        if full_batch:
            grads, _ = batch_gradients(model, records, labels, weights)
            model = gd_step(model, grads, config.learning_rate)
            continue
        order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            grads, _ = batch_gradients(model, records[idx], labels[idx], weights[idx])
            model = gd_step(model, grads, config.learning_rate)
    return model


def dataset_loss(
    model: MlpModel,
    records: np.ndarray,
    labels: np.ndarray,
    weights: np.ndarray | None = None,
) -> float:
    _, loss = batch_gradients(model, records, labels, weights)
    return loss


def test_accuracy(model: MlpModel, records: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of records whose argmax output matches the label.

    Ties break toward the lowest class index (argmax convention).
    """
    records = np.asarray(records, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if records.shape[0] == 0:
        raise DomainError("cannot evaluate on an empty dataset")
    _, _, probs = forward_batch(model, records)
    predicted = probs.argmax(axis=1)
    return float((predicted == labels).mean())
