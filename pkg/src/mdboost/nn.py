"""Minimal dense binary classifier with analytic gradients.

The detector is a small MLP over flattened float inputs: affine layers with
relu/tanh activations and a 2-way softmax head (index 0 = real, 1 = fake).
Parameters live in a single flat float64 vector laid out layer by layer,
weights then bias, so optimizers and momentum teachers can treat the model
as one array. Everything is plain numpy; gradients are exact backprop and
are cross-checked against central finite differences by `grad_check`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericError, ShapeError

ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class ClassifierSpec:
    """Architecture of the reference detector: input_dim -> hidden_dims -> 2."""

    input_dim: int
    hidden_dims: tuple[int, ...] = (8,)
    activation: str = "relu"
    output_classes: int = 2

    def __post_init__(self):
        if self.input_dim < 1:
            raise DomainError(f"input_dim must be positive, got {self.input_dim}")
        object.__setattr__(self, "hidden_dims", tuple(self.hidden_dims))
        if not self.hidden_dims or any(h < 1 for h in self.hidden_dims):
            raise DomainError("hidden_dims must be a nonempty list of positive ints")
        if self.activation not in ACTIVATIONS:
            raise DomainError(f"activation must be one of {ACTIVATIONS}")
        if self.output_classes != 2:
            raise DomainError("the reference detector is binary: output_classes == 2")

    def layer_dims(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) per affine layer, hidden layers then the head."""
        dims = [self.input_dim, *self.hidden_dims, self.output_classes]
        return [(dims[i], dims[i + 1]) for i in range(len(dims) - 1)]

    def param_count(self) -> int:
        return sum(fi * fo + fo for fi, fo in self.layer_dims())


def init_params(spec: ClassifierSpec, seed: int) -> np.ndarray:
    """Seeded flat parameter vector.

    Weights are uniform in [-s, s] with s = sqrt(6 / (fan_in + fan_out));
    biases start at zero.
    """
    rng = np.random.default_rng(seed)
    chunks = []
    for fan_in, fan_out in spec.layer_dims():
        s = np.sqrt(6.0 / (fan_in + fan_out))
        chunks.append(rng.uniform(-s, s, size=fan_in * fan_out))
        chunks.append(np.zeros(fan_out))
    return np.concatenate(chunks)


def unpack_params(spec: ClassifierSpec, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views of the flat vector as [(W, b), ...], W shaped (fan_in, fan_out)."""
    params = np.asarray(params, dtype=np.float64)
    if params.ndim != 1 or params.size != spec.param_count():
        raise ShapeError(
            f"params must be a flat vector of length {spec.param_count()}, "
            f"got shape {params.shape}"
        )
    layers = []
    offset = 0
    for fan_in, fan_out in spec.layer_dims():
        w = params[offset : offset + fan_in * fan_out].reshape(fan_in, fan_out)
        offset += fan_in * fan_out
        b = params[offset : offset + fan_out]
        offset += fan_out
        layers.append((w, b))
    return layers


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _activate_grad(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    t = np.tanh(z)
    return 1.0 - t * t


def _softmax2(logits: np.ndarray) -> np.ndarray:
    # Shift by the row max so exp never overflows; rows sum to 1 within rounding.
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _forward_cached(spec: ClassifierSpec, params: np.ndarray, x: np.ndarray):
    """Forward pass keeping pre-activations and activations for backprop."""
    layers = unpack_params(spec, params)
    h = x
    pre, acts = [], [h]
    for i, (w, b) in enumerate(layers):
        z = h @ w + b
        pre.append(z)
        h = _activate(z, spec.activation) if i < len(layers) - 1 else z
        acts.append(h)
    logits = acts[-1]
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite logits in forward pass")
    probs = _softmax2(logits)
    return probs, pre, acts


def as_batch(batch) -> tuple[np.ndarray, np.ndarray]:
    """Normalize a batch to (X, y) float64/int arrays.

    Accepts either an (X, y) pair of arrays or a sequence of (input, label)
    pairs; inputs are flattened row-major.
    """
    if isinstance(batch, tuple) and len(batch) == 2 and np.ndim(batch[0]) == 2:
        x = np.asarray(batch[0], dtype=np.float64)
        y = np.asarray(batch[1], dtype=np.int64)
    else:
        pairs = list(batch)
        if not pairs:
            return np.zeros((0, 0)), np.zeros(0, dtype=np.int64)
        x = np.stack([np.asarray(p[0], dtype=np.float64).ravel() for p in pairs])
        y = np.asarray([p[1] for p in pairs], dtype=np.int64)
    if x.shape[0] != y.shape[0]:
        raise ShapeError(f"batch has {x.shape[0]} inputs but {y.shape[0]} labels")
    if np.any((y != 0) & (y != 1)):
        raise DomainError("labels must be 0 (real) or 1 (fake)")
    return x, y


def forward_batch(spec: ClassifierSpec, params: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Class probabilities, shape (B, 2), rows summing to 1."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != spec.input_dim:
        raise ShapeError(f"expected inputs of dim {spec.input_dim}, got {x.shape[1]}")
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite values in input")
    probs, _, _ = _forward_cached(spec, params, x)
    return probs


def forward_logits(spec: ClassifierSpec, params: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Raw pre-softmax logits, shape (B, 2)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != spec.input_dim:
        raise ShapeError(f"expected inputs of dim {spec.input_dim}, got {x.shape[1]}")
    _, _, acts = _forward_cached(spec, params, x)
    return acts[-1]


def forward(spec: ClassifierSpec, params: np.ndarray, x) -> tuple[float, float]:
    """Probability pair (p_real, p_fake) for a single input."""
    flat = np.asarray(x, dtype=np.float64).ravel()
    if flat.size != spec.input_dim:
        raise ShapeError(f"expected input of dim {spec.input_dim}, got {flat.size}")
    p = forward_batch(spec, params, flat[None, :])[0]
    return float(p[0]), float(p[1])


def cross_entropy(probs, label: int) -> float:
    """-ln p(true class), with the probability clamped to at least 1e-12."""
    if label not in (0, 1):
        raise DomainError(f"label must be 0 or 1, got {label!r}")
    p = float(probs[label])
    return -float(np.log(max(p, 1e-12)))


def batch_cross_entropy(probs: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-sample cross-entropy for a (B, 2) probability array."""
    p_true = probs[np.arange(len(y)), y]
    return -np.log(np.maximum(p_true, 1e-12))


def batch_loss(
    spec: ClassifierSpec,
    params: np.ndarray,
    batch,
    weights: np.ndarray | None = None,
    weight_decay: float = 0.0,
) -> float:
    """Objective value: (1/B) sum_i w_i CE_i + weight_decay * ||params||^2 / 2."""
    x, y = as_batch(batch)
    if x.shape[0] == 0:
        raise DomainError("empty batch")
    probs = forward_batch(spec, params, x)
    ce = batch_cross_entropy(probs, y)
    w = np.ones(len(y)) if weights is None else np.asarray(weights, dtype=np.float64)
    loss = float(np.mean(w * ce))
    if weight_decay:
        loss += weight_decay * 0.5 * float(params @ params)
    return loss


def gradient(
    spec: ClassifierSpec,
    params: np.ndarray,
    batch,
    weights: np.ndarray | None = None,
    weight_decay: float = 0.0,
    logit_grad_extra: np.ndarray | None = None,
) -> np.ndarray:
    """Exact gradient of the weighted mean cross-entropy plus L2 term.

    d/dtheta of (1/B) sum_i w_i CE(y_i, f(x_i)) + weight_decay * ||theta||^2/2.
    `logit_grad_extra` (B, 2), when given, is added to the loss gradient at the
    logits before backprop; distillation losses hook in through it.
    """
    x, y = as_batch(batch)
    n = x.shape[0]
    if n == 0:
        raise DomainError("empty batch")
    if weights is None:
        w = np.ones(n)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (n,):
            raise ShapeError(f"weights shape {w.shape} does not match batch size {n}")
        if np.any(w < 0):
            raise DomainError("per-sample weights must be nonnegative")

    probs, pre, acts = _forward_cached(spec, params, x)
    onehot = np.zeros_like(probs)
    onehot[np.arange(n), y] = 1.0
    # d/dlogits of (1/B) sum w_i CE_i is w_i (p - onehot) / B, row by row.
    dlogits = (probs - onehot) * (w / n)[:, None]
    if logit_grad_extra is not None:
        dlogits = dlogits + logit_grad_extra

    layers = unpack_params(spec, params)
    grads: list[np.ndarray] = [None] * len(layers)  # type: ignore[list-item]
    delta = dlogits
    for i in range(len(layers) - 1, -1, -1):
        w_i, _ = layers[i]
        dw = acts[i].T @ delta
        db = delta.sum(axis=0)
        grads[i] = np.concatenate([dw.ravel(), db])
        if i > 0:
            delta = (delta @ w_i.T) * _activate_grad(pre[i - 1], spec.activation)

    flat = np.concatenate(grads)
    if weight_decay:
        flat = flat + weight_decay * np.asarray(params, dtype=np.float64)
    return flat


def grad_check(
    spec: ClassifierSpec,
    seed: int,
    batch_size: int = 3,
    h: float = 1e-5,
) -> float:
    """Max relative error between backprop and central finite differences.

    Builds a seeded random batch and weights, then compares every component:
    |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
    """
    if spec.param_count() > 10_000:
        raise DomainError("grad_check is meant for specs with <= 10,000 parameters")
    rng = np.random.default_rng(seed)
    params = init_params(spec, seed)
    x = rng.normal(size=(batch_size, spec.input_dim))
    y = rng.integers(0, 2, size=batch_size)
    w = rng.uniform(0.5, 2.0, size=batch_size)

    analytic = gradient(spec, params, (x, y), w)
    numeric = np.empty_like(analytic)
    for j in range(params.size):
        bumped = params.copy()
        bumped[j] = params[j] + h
        up = batch_loss(spec, bumped, (x, y), w)
        bumped[j] = params[j] - h
        down = batch_loss(spec, bumped, (x, y), w)
        numeric[j] = (up - down) / (2.0 * h)

    denom = np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
    return float(np.max(np.abs(analytic - numeric) / denom))
