"""Minimal dense MLP with exact backpropagation.

Deliberately bare: ReLU hidden layers, linear readout, no normalization, no
residual connections, no dropout.  That starkness is the point — the
regularizers are evaluated on how well they keep such a network trainable.
Pure SGD with global-norm gradient clipping is the only optimizer.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataFormatError, LabelError, ShapeMismatchError
from .linalg import Matrix
from .regularizers import LossWithGrad
from .rng import RngStream

CHECKPOINT_MAGIC = b"SMLP"
CHECKPOINT_VERSION = 1


@dataclass
class MlpModel:
    """Dense ReLU MLP; weights[i] has shape (widths[i+1], widths[i])."""

    layer_widths: list[int]
    weights: list[Matrix]
    biases: list[np.ndarray]

    @property
    def depth(self) -> int:
        return len(self.weights)

    def describe(self) -> dict:
        """Structural description; used to assert the absence of
        normalization/residual/dropout machinery."""
        return {
            "layer_widths": list(self.layer_widths),
            "hidden_activation": "relu",
            "output_activation": "identity",
            "normalization": "none",
            "residual_connections": False,
            "dropout": 0.0,
        }


def mlp_widths(input_dim: int, num_classes: int, depth: int, width: int) -> list[int]:
    """Layer widths for a `depth`-linear-layer MLP with uniform hidden width."""
    if depth < 1:
        raise ConfigError(f"depth must be >= 1, got {depth}")
    return [input_dim] + [width] * (depth - 1) + [num_classes]


def init_mlp(layer_widths: list[int], rng: RngStream) -> MlpModel:
    """He-normal weights (std sqrt(2/fan_in)), zero biases.

    Each layer draws from its own named child stream, so adding or removing
    layers does not shift the draws of the others.
    """
    if len(layer_widths) < 2:
        raise ConfigError("need at least input and output widths")
    weights = []
    biases = []
    for i in range(len(layer_widths) - 1):
        fan_in = layer_widths[i]
        fan_out = layer_widths[i + 1]
        layer_rng = rng.child(f"layer-{i}")
        weights.append(layer_rng.normal((fan_out, fan_in)) * np.sqrt(2.0 / fan_in))
        biases.append(np.zeros(fan_out))
    return MlpModel(layer_widths=list(layer_widths), weights=weights, biases=biases)


@dataclass
class ForwardTrace:
    """Cache of one forward pass for exact backprop.

    activations[l] is the input to linear layer l (post-ReLU for l >= 1);
    pre_activations[l] is the output of linear layer l before its
    activation.  logits is pre_activations[-1] (no output activation).
    """

    activations: list[Matrix]
    pre_activations: list[Matrix]
    logits: Matrix


def forward(model: MlpModel, batch: Matrix) -> ForwardTrace:
    """Forward pass: a_{l+1} = relu(W_l a_l + b_l), linear readout."""
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.layer_widths[0]:
        raise ShapeMismatchError(
            f"batch shape {x.shape} incompatible with input width "
            f"{model.layer_widths[0]}"
        )
    activations = [x]
    pre_activations = []
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = activations[-1] @ w.T + b
        pre_activations.append(z)
        if i < model.depth - 1:
            activations.append(np.maximum(z, 0.0))
    return ForwardTrace(
        activations=activations,
        pre_activations=pre_activations,
        logits=pre_activations[-1],
    )


def cross_entropy(logits: Matrix, labels: np.ndarray) -> LossWithGrad:
    """Mean negative log-softmax of the true class, max-stabilized.

    grad = (softmax - onehot) / N, the exact derivative of the mean.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    n, num_classes = logits.shape
    if labels.shape != (n,):
        raise ShapeMismatchError(
            f"labels shape {labels.shape} does not match batch size {n}"
        )
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        bad = int(labels[(labels < 0) | (labels >= num_classes)][0])
        raise LabelError(f"label {bad} outside [0, {num_classes})")

    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_norm
    rows = np.arange(n)
    value = float(-log_probs[rows, labels].mean())
    grad = np.exp(log_probs)
    grad[rows, labels] -= 1.0
    grad /= n
    return LossWithGrad(value=value, grad=grad)


@dataclass
class Gradients:
    """Per-parameter gradients, same shapes as the model's weights/biases."""

    weights: list[Matrix]
    biases: list[np.ndarray]

    def global_norm(self) -> float:
        total = 0.0
        for g in self.weights:
            total += float(np.sum(g * g))
        for g in self.biases:
            total += float(np.sum(g * g))
        return float(np.sqrt(total))


def backward(
    model: MlpModel,
    trace: ForwardTrace,
    head_grad: Matrix,
    reg_attach: int | None = None,
    reg_grad: Matrix | None = None,
) -> Gradients:
    """Exact reverse-mode gradients of a loss whose logit-gradient is
    ``head_grad``, with an optional extra gradient injected additively at
    hidden activation ``reg_attach`` (1 <= reg_attach <= depth-1).
    """
    depth = model.depth
    if reg_attach is not None:
        if not 1 <= reg_attach <= depth - 1:
            raise ConfigError(
                f"reg_attach must be a hidden layer index in [1, {depth - 1}], "
                f"got {reg_attach}"
            )
        if reg_grad is not None and reg_grad.shape != trace.activations[reg_attach].shape:
            raise ShapeMismatchError(
                f"reg_grad shape {reg_grad.shape} does not match activation "
                f"shape {trace.activations[reg_attach].shape} at layer {reg_attach}"
            )

    w_grads: list[Matrix | None] = [None] * depth
    b_grads: list[np.ndarray | None] = [None] * depth
    g = np.asarray(head_grad, dtype=np.float64)
    if g.shape != trace.logits.shape:
        raise ShapeMismatchError(
            f"head_grad shape {g.shape} does not match logits {trace.logits.shape}"
        )
    for layer in reversed(range(depth)):
        w_grads[layer] = g.T @ trace.activations[layer]
        b_grads[layer] = g.sum(axis=0)
        if layer == 0:
            break
        da = g @ model.weights[layer]
        if reg_attach == layer and reg_grad is not None:
            da = da + reg_grad
        g = da * (trace.pre_activations[layer - 1] > 0.0)
    return Gradients(weights=w_grads, biases=b_grads)


def clip_global_norm(grads: Gradients, clip_norm: float) -> Gradients:
    """Scale all gradients by clip_norm/norm when the global L2 norm exceeds
    clip_norm; otherwise return them unchanged."""
    if not clip_norm > 0:
        raise ConfigError(f"clip_norm must be positive, got {clip_norm}")
    norm = grads.global_norm()
    if norm <= clip_norm:
        return grads
    scale = clip_norm / norm
    return Gradients(
        weights=[w * scale for w in grads.weights],
        biases=[b * scale for b in grads.biases],
    )


@dataclass(frozen=True)
class SgdConfig:
    """Plain SGD settings; the stress-test preset pins momentum to 0."""

    learning_rate: float = 0.05
    momentum: float = 0.0
    clip_norm: float = 1.0


def sgd_step(
    model: MlpModel,
    grads: Gradients,
    cfg: SgdConfig,
    velocity: Gradients | None = None,
) -> tuple[MlpModel, Gradients | None]:
    """One SGD update, w <- w - lr * g.

    A momentum buffer is created and returned only when cfg.momentum > 0;
    with momentum == 0 the returned state is always None.
    """
    lr = cfg.learning_rate
    if cfg.momentum > 0.0:
        if velocity is None:
            velocity = Gradients(
                weights=[np.zeros_like(w) for w in model.weights],
                biases=[np.zeros_like(b) for b in model.biases],
            )
        velocity = Gradients(
            weights=[cfg.momentum * v + g for v, g in zip(velocity.weights, grads.weights)],
            biases=[cfg.momentum * v + g for v, g in zip(velocity.biases, grads.biases)],
        )
        step = velocity
    else:
        velocity = None
        step = grads
    new_model = MlpModel(
        layer_widths=list(model.layer_widths),
        weights=[w - lr * g for w, g in zip(model.weights, step.weights)],
        biases=[b - lr * g for b, g in zip(model.biases, step.biases)],
    )
    return new_model, velocity


def save_checkpoint(model: MlpModel, path: str | Path) -> None:
    """Versioned little-endian binary: magic, version, width count, widths,
    then per-layer weight and bias blocks in layer order."""
    path = Path(path)
    widths = model.layer_widths
    parts = [struct.pack("<4sII", CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(widths))]
    parts.append(struct.pack(f"<{len(widths)}I", *widths))
    for w, b in zip(model.weights, model.biases):
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    path.write_bytes(b"".join(parts))


def load_checkpoint(path: str | Path) -> MlpModel:
    """Inverse of save_checkpoint, validating magic, version, and length."""
    raw = Path(path).read_bytes()
    header = struct.calcsize("<4sII")
    if len(raw) < header:
        raise DataFormatError(f"checkpoint too short: {len(raw)} bytes")
    magic, version, n_widths = struct.unpack_from("<4sII", raw, 0)
    if magic != CHECKPOINT_MAGIC:
        raise DataFormatError(f"bad checkpoint magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise DataFormatError(f"unsupported checkpoint version {version}")
    offset = header
    widths = list(struct.unpack_from(f"<{n_widths}I", raw, offset))
    offset += 4 * n_widths
    weights = []
    biases = []
    for i in range(len(widths) - 1):
        fan_in, fan_out = widths[i], widths[i + 1]
        w_bytes = fan_out * fan_in * 8
        if offset + w_bytes + fan_out * 8 > len(raw):
            raise DataFormatError(f"checkpoint truncated at byte {len(raw)}")
        w = np.frombuffer(raw, dtype="<f8", count=fan_out * fan_in, offset=offset)
        weights.append(w.reshape(fan_out, fan_in).astype(np.float64))
        offset += w_bytes
        b = np.frombuffer(raw, dtype="<f8", count=fan_out, offset=offset)
        biases.append(b.astype(np.float64))
        offset += fan_out * 8
    if offset != len(raw):
        raise DataFormatError(f"trailing bytes after offset {offset}")
    return MlpModel(layer_widths=widths, weights=weights, biases=biases)
