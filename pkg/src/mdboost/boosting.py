"""Training strategies for heterogeneous multi-source data.

Four strategies share one gradient/optimizer substrate:

- vanilla: unweighted mean cross-entropy over the merged data.
- kd: vanilla plus a temperature-softened distillation term against a
  momentum (EMA) teacher; the teacher only provides soft targets.
- dw: difficulty weighting where each sample's weight comes from the
  in-training network's own cross-entropy on it.
- mdb: momentum difficulty boosting — difficulty scored by the EMA teacher,
  rescaled per mini-batch into [1, C], applied as per-sample loss weights.

The strategies reduce to one another in the degenerate corners (kd with
beta 0, mdb with uniform scores, dw vs mdb with m=0 and a synchronized
teacher) and the implementation keeps those reductions bit-exact by routing
everything through the same weighted-gradient code path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .errors import DomainError, ShapeError
from .optim import AdamState, adam_step

STRATEGY_KINDS = ("vanilla", "kd", "dw", "mdb")


@dataclass
class MomentumState:
    """EMA teacher parameters and the momentum coefficient."""

    theta_bar: np.ndarray
    m: float = 0.97

    def __post_init__(self):
        self.theta_bar = np.asarray(self.theta_bar, dtype=np.float64)
        if not (0.0 <= self.m <= 1.0):
            raise DomainError(f"momentum m must lie in [0, 1], got {self.m}")


@dataclass(frozen=True)
class StrategyConfig:
    """Which strategy to run and its knobs.

    cap_C bounds the rescaled sample weights; momentum_m drives the EMA
    teacher; the kd_* fields only matter for kind == "kd".
    """

    kind: str = "mdb"
    cap_C: float = 5.0
    momentum_m: float = 0.97
    kd_temperature: float = 2.0
    kd_beta: float = 0.5
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise DomainError(f"unknown strategy kind {self.kind!r}")
        if self.cap_C < 1.0:
            raise DomainError(f"cap_C must be >= 1, got {self.cap_C}")
        if not (0.0 <= self.momentum_m <= 1.0):
            raise DomainError("momentum_m must lie in [0, 1]")
        if self.kd_temperature <= 0.0:
            raise DomainError("kd_temperature must be positive")
        if self.kd_beta < 0.0 or self.weight_decay < 0.0:
            raise DomainError("kd_beta and weight_decay must be nonnegative")


@dataclass
class DifficultyWeights:
    """Raw per-sample difficulty scores and their [1, C] rescaling."""

    raw_scores: np.ndarray
    weights: np.ndarray


def momentum_update(state: MomentumState, student: np.ndarray) -> MomentumState:
    """EMA step: theta_bar <- m * theta_bar + (1 - m) * student, elementwise."""
    student = np.asarray(student, dtype=np.float64)
    if student.shape != state.theta_bar.shape:
        raise ShapeError(
            f"student shape {student.shape} does not match teacher {state.theta_bar.shape}"
        )
    new_bar = state.m * state.theta_bar + (1.0 - state.m) * student
    return MomentumState(theta_bar=new_bar, m=state.m)


def difficulty_scores(spec: nn.ClassifierSpec, teacher, batch) -> np.ndarray:
    """Per-sample difficulty: cross-entropy of the teacher's prediction.

    `teacher` is a MomentumState or a bare parameter vector (the dw strategy
    scores with the in-training network itself).
    """
    params = teacher.theta_bar if isinstance(teacher, MomentumState) else teacher
    x, y = nn.as_batch(batch)
    if x.shape[0] == 0:
        raise DomainError("empty batch")
    probs = nn.forward_batch(spec, params, x)
    return nn.batch_cross_entropy(probs, y)


def rescale_weights(raw_scores, cap_C: float) -> np.ndarray:
    """Affine min-max map of scores onto [1, C], per mini-batch.

    The lowest score maps to 1 and the highest to C; an all-equal batch
    (range below 1e-12, including singletons) maps to all ones so that the
    step degenerates to the unweighted one.
    """
    if cap_C < 1.0:
        raise DomainError(f"cap_C must be >= 1, got {cap_C}")
    g = np.asarray(raw_scores, dtype=np.float64)
    if g.size == 0:
        raise DomainError("empty score array")
    if not np.all(np.isfinite(g)) or np.any(g < 0):
        raise DomainError("difficulty scores must be finite and nonnegative")
    span = g.max() - g.min()
    if span < 1e-12:
        return np.ones_like(g)
    # Normalize before scaling so the extremes hit 1 and C exactly.
    return 1.0 + (cap_C - 1.0) * ((g - g.min()) / span)


def _weighted_step(spec, params, optimizer, batch, weights, config, logit_grad_extra=None):
    grad = nn.gradient(
        spec,
        params,
        batch,
        weights=weights,
        weight_decay=config.weight_decay,
        logit_grad_extra=logit_grad_extra,
    )
    return adam_step(optimizer, params, grad)


def vanilla_step(spec, params, optimizer, config: StrategyConfig, batch):
    """Unweighted mean-CE gradient step."""
    if config.kind != "vanilla":
        raise DomainError(f"vanilla_step called with kind {config.kind!r}")
    x, y = nn.as_batch(batch)
    weights = np.ones(x.shape[0])
    params, optimizer = _weighted_step(spec, params, optimizer, (x, y), weights, config)
    return params, optimizer


def dw_step(spec, params, optimizer, config: StrategyConfig, batch):
    """Difficulty-weighted step scored by the in-training network itself."""
    if config.kind != "dw":
        raise DomainError(f"dw_step called with kind {config.kind!r}")
    x, y = nn.as_batch(batch)
    scores = difficulty_scores(spec, params, (x, y))
    weights = rescale_weights(scores, config.cap_C)
    params, optimizer = _weighted_step(spec, params, optimizer, (x, y), weights, config)
    return params, optimizer, DifficultyWeights(raw_scores=scores, weights=weights)


def mdb_step(spec, params, optimizer, momentum: MomentumState, config: StrategyConfig, batch):
    """Momentum difficulty boosting step.

    Order within the step: (1) score the batch with the current teacher,
    (2) rescale scores into [1, C] weights, (3) weighted gradient and
    optimizer update on the student, (4) EMA update of the teacher.
    """
    if config.kind != "mdb":
        raise DomainError(f"mdb_step called with kind {config.kind!r}")
    x, y = nn.as_batch(batch)
    scores = difficulty_scores(spec, momentum, (x, y))
    weights = rescale_weights(scores, config.cap_C)
    params, optimizer = _weighted_step(spec, params, optimizer, (x, y), weights, config)
    momentum = momentum_update(momentum, params)
    return params, optimizer, momentum, DifficultyWeights(raw_scores=scores, weights=weights)


def kd_loss_parts(spec, params, momentum: MomentumState, config: StrategyConfig, batch):
    """(total, ce_part, kl_part) of the distillation objective.

    kl_part = kd_beta * T^2 * mean KL(soften(teacher) || soften(student)).
    """
    x, y = nn.as_batch(batch)
    t = config.kd_temperature
    student_logits = nn.forward_logits(spec, params, x)
    teacher_logits = nn.forward_logits(spec, momentum.theta_bar, x)
    p = nn._softmax2(teacher_logits / t)
    q = nn._softmax2(student_logits / t)
    kl = np.sum(p * (np.log(np.maximum(p, 1e-300)) - np.log(np.maximum(q, 1e-300))), axis=1)
    ce = nn.batch_cross_entropy(nn._softmax2(student_logits), y)
    ce_part = float(np.mean(ce))
    kl_part = float(config.kd_beta * t * t * np.mean(kl))
    return ce_part + kl_part, ce_part, kl_part


def kd_step(spec, params, optimizer, momentum: MomentumState, config: StrategyConfig, batch):
    """Distillation step: mean CE plus softened KL against the EMA teacher.

    Gradient flows only through the student; the teacher is EMA-updated
    after the parameter step.
    """
    if config.kind != "kd":
        raise DomainError(f"kd_step called with kind {config.kind!r}")
    x, y = nn.as_batch(batch)
    n = x.shape[0]
    t = config.kd_temperature
    teacher_logits = nn.forward_logits(spec, momentum.theta_bar, x)
    student_logits = nn.forward_logits(spec, params, x)
    p = nn._softmax2(teacher_logits / t)
    q = nn._softmax2(student_logits / t)
    # d/dlogits of kd_beta * T^2 * mean KL(p || q) is kd_beta * T * (q - p) / B.
    extra = config.kd_beta * t * (q - p) / n
    weights = np.ones(n)
    params, optimizer = _weighted_step(
        spec, params, optimizer, (x, y), weights, config, logit_grad_extra=extra
    )
    momentum = momentum_update(momentum, params)
    return params, optimizer, momentum


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    train_acc: float
    source_mean_weight: dict[str, float]

    def to_record(self) -> dict:
        return {
            "epoch": self.epoch,
            "loss": self.mean_loss,
            "acc": self.train_acc,
            "source_mean_weight": self.source_mean_weight,
        }


@dataclass
class TrainLog:
    """Per-epoch training trace plus the final model state."""

    strategy: str
    seed: int
    epochs: list[EpochStats] = field(default_factory=list)
    final_params: np.ndarray | None = None
    final_momentum: MomentumState | None = None

    def to_jsonl(self) -> str:
        return "\n".join(json.dumps(e.to_record(), sort_keys=True) for e in self.epochs)


def train(
    spec: nn.ClassifierSpec,
    config: StrategyConfig,
    dataset,
    epochs: int,
    batch_size: int,
    seed: int,
    lr: float = 0.0001,
    image_root=None,
) -> TrainLog:
    """Run one training job from scratch and return its TrainLog.

    `dataset` is a Manifest; every record needs features (inline for
    synthetic records, decoded from `image_root` otherwise). Shuffling is
    seeded per epoch, so identical inputs give bit-identical logs. Mean loss
    and accuracy are measured on each batch before its update; the logged
    loss is the unweighted mean CE so runs are comparable across strategies.
    """
    from .datasets import training_arrays

    if epochs < 1:
        raise DomainError(f"epochs must be >= 1, got {epochs}")
    if batch_size < 1:
        raise DomainError(f"batch_size must be >= 1, got {batch_size}")
    x_all, y_all, sources = training_arrays(dataset, image_root=image_root)
    n = x_all.shape[0]
    if n == 0:
        raise DomainError("dataset has no usable records")
    sources = np.asarray(sources)

    rng = np.random.default_rng(seed)
    params = nn.init_params(spec, seed)
    optimizer = AdamState.for_params(params, lr=lr)
    momentum = None
    if config.kind in ("mdb", "kd"):
        momentum = MomentumState(theta_bar=params.copy(), m=config.momentum_m)

    log = TrainLog(strategy=config.kind, seed=seed)
    source_names = sorted(set(sources.tolist()))
    for epoch in range(1, epochs + 1):
        order = rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        weight_sum = {s: 0.0 for s in source_names}
        weight_count = {s: 0 for s in source_names}
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            xb, yb = x_all[idx], y_all[idx]
            probs = nn.forward_batch(spec, params, xb)
            loss_sum += float(np.sum(nn.batch_cross_entropy(probs, yb)))
            correct += int(np.sum(np.argmax(probs, axis=1) == yb))

            if config.kind == "vanilla":
                params, optimizer = vanilla_step(spec, params, optimizer, config, (xb, yb))
                batch_weights = np.ones(len(idx))
            elif config.kind == "kd":
                params, optimizer, momentum = kd_step(
                    spec, params, optimizer, momentum, config, (xb, yb)
                )
                batch_weights = np.ones(len(idx))
            elif config.kind == "dw":
                params, optimizer, dweights = dw_step(
                    spec, params, optimizer, config, (xb, yb)
                )
                batch_weights = dweights.weights
            else:
                params, optimizer, momentum, dweights = mdb_step(
                    spec, params, optimizer, momentum, config, (xb, yb)
                )
                batch_weights = dweights.weights

            for s, w in zip(sources[idx], batch_weights):
                weight_sum[s] += float(w)
                weight_count[s] += 1

        mean_weights = {
            s: (weight_sum[s] / weight_count[s]) if weight_count[s] else 1.0
            for s in source_names
        }
        log.epochs.append(
            EpochStats(
                epoch=epoch,
                mean_loss=loss_sum / n,
                train_acc=correct / n,
                source_mean_weight=mean_weights,
            )
        )

    log.final_params = params
    log.final_momentum = momentum
    return log
