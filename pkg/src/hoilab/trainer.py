"""Oversampled mini-batch training with Adam and cosine warm restarts."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import classifier as clf_mod
from . import losses
from .datagen import SyntheticDataset
from .evaluation import evaluate
from .seeding import derive_seed, substream
from .taxonomy import ClassStats, compute_stats

__all__ = [
    "TrainConfig",
    "EpochPlan",
    "TrainingLog",
    "TrainingDiverged",
    "plan_epoch",
    "lr_at",
    "train",
]


@dataclass(frozen=True)
class TrainConfig:
    loss_name: str = "lse_sign"
    gamma: float = 100.0
    epochs: int = 30
    batch_size: int = 64
    base_lr: float = 1e-3
    restart_period_epochs: int = 5
    min_samples_per_class: int = 40
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    focal_gamma: float = 2.0
    focal_alpha: float = 0.25
    val_fraction: float = 0.1
    normalize_features: bool = False

    def __post_init__(self) -> None:
        if self.loss_name not in losses.LOSS_NAMES:
            raise ValueError(
                f"unknown loss {self.loss_name!r}; expected one of {losses.LOSS_NAMES}"
            )
        if not np.isfinite(self.gamma) or self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        # epochs=0 and base_lr=0 are allowed: both reduce to "change nothing".
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not np.isfinite(self.base_lr) or self.base_lr < 0:
            raise ValueError(f"base_lr must be >= 0, got {self.base_lr}")
        if self.restart_period_epochs < 1:
            raise ValueError(
                f"restart_period_epochs must be >= 1, got {self.restart_period_epochs}"
            )
        if self.min_samples_per_class < 0:
            raise ValueError("min_samples_per_class must be >= 0")
        if not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1:
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not 0 <= self.val_fraction < 1:
            raise ValueError(f"val_fraction must lie in [0, 1), got {self.val_fraction}")

    @classmethod
    def from_dict(cls, payload: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise ValueError(f"unknown TrainConfig keys: {sorted(unknown)}")
        return cls(**payload)


@dataclass(frozen=True)
class EpochPlan:
    """Shuffled sample indices for one epoch, duplicates included."""

    sample_indices: np.ndarray

    def __len__(self) -> int:
        return self.sample_indices.shape[0]


def plan_epoch(
    stats: ClassStats, dataset_size: int, min_samples_per_class: int, seed: int
) -> EpochPlan:
    """Class-balanced oversampling plan.

    Starts from every index once, then tops up each under-represented
    class by re-drawing its positive samples uniformly until the class's
    planned positive count reaches the floor.  A drawn sample counts
    toward every class it is positive for, so multi-label samples are
    not multiply duplicated.
    """
    if dataset_size != stats.n_samples:
        raise ValueError(
            f"dataset_size {dataset_size} does not match stats over {stats.n_samples} samples"
        )
    if min_samples_per_class < 0:
        raise ValueError("min_samples_per_class must be >= 0")
    rng = np.random.default_rng(seed)
    classes_of: list[list[int]] = [[] for _ in range(dataset_size)]
    for c, members in enumerate(stats.positive_indices):
        for idx in members:
            classes_of[int(idx)].append(c)
    planned = stats.train_count.astype(np.int64).copy()
    extras: list[int] = []
    for c, members in enumerate(stats.positive_indices):
        if members.shape[0] == 0:
            continue
        while planned[c] < min_samples_per_class:
            idx = int(members[rng.integers(0, members.shape[0])])
            extras.append(idx)
            for cc in classes_of[idx]:
                planned[cc] += 1
    indices = np.concatenate(
        [np.arange(dataset_size, dtype=np.int64), np.asarray(extras, dtype=np.int64)]
    )
    return EpochPlan(sample_indices=rng.permutation(indices))


def lr_at(step: int, steps_per_epoch: int, cfg: TrainConfig) -> float:
    """Cosine decay restarting every `restart_period_epochs` epochs.

    Within a period the rate falls from base_lr to ~0 along
    0.5 * (1 + cos(pi * t)) with t in [0, 1), then snaps back.
    """
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    if steps_per_epoch < 1:
        raise ValueError(f"steps_per_epoch must be >= 1, got {steps_per_epoch}")
    period = cfg.restart_period_epochs * steps_per_epoch
    t = (step % period) / period
    return cfg.base_lr * 0.5 * (1.0 + math.cos(math.pi * t))


@dataclass
class TrainingLog:
    """Per-epoch records: (epoch, mean_loss, val_mAP, lr at epoch start)."""

    rows: list[tuple[int, float, float, float]] = field(default_factory=list)

    def append(self, epoch: int, mean_loss: float, val_map: float, lr: float) -> None:
        self.rows.append((int(epoch), float(mean_loss), float(val_map), float(lr)))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "mean_loss", "val_mAP", "lr"])
            for epoch, mean_loss, val_map, lr in self.rows:
                writer.writerow([epoch, repr(mean_loss), repr(val_map), repr(lr)])


class TrainingDiverged(RuntimeError):
    """Raised when a batch produces a non-finite loss."""

    def __init__(self, epoch: int, step: int, batch_rows: np.ndarray):
        self.epoch = epoch
        self.step = step
        self.batch_rows = np.asarray(batch_rows)
        super().__init__(
            f"non-finite loss at epoch {epoch}, step {step}; "
            f"batch rows {self.batch_rows.tolist()[:8]}"
        )


def _maybe_normalize(features: np.ndarray, enabled: bool) -> np.ndarray:
    if not enabled:
        return features
    norms = np.linalg.norm(features, axis=-1, keepdims=True)
    return features / np.maximum(norms, 1e-12)


def train(
    dataset: SyntheticDataset,
    clf: clf_mod.LinearClassifier,
    cfg: TrainConfig,
) -> tuple[clf_mod.LinearClassifier, TrainingLog]:
    """Train a copy of `clf` on the dataset's train split.

    A deterministic `val_fraction` holdout is carved off for the
    per-epoch validation mAP column; the optimizer is Adam with zero
    weight decay and mean-reduced batch gradients.
    """
    train_set = dataset.train
    if clf.dim != train_set.dim or clf.num_classes != train_set.num_classes:
        raise ValueError("classifier geometry does not match the dataset")
    model = clf.clone()
    log = TrainingLog()
    if cfg.epochs == 0:
        return model, log

    n = len(train_set)
    perm = substream(cfg.seed, "holdout").permutation(n)
    n_val = int(round(cfg.val_fraction * n))
    if n - n_val < 1:
        raise ValueError("validation holdout leaves no training samples")
    val_rows = perm[:n_val]
    train_rows = perm[n_val:]

    features = _maybe_normalize(train_set.features, cfg.normalize_features)
    labels = train_set.labels
    split_stats = compute_stats(labels[train_rows])
    loss_fn = losses.get_loss(
        cfg.loss_name,
        pos_weight=losses.positive_negative_ratio(
            split_stats.train_count, split_stats.n_samples
        ),
        gamma_f=cfg.focal_gamma,
        alpha=cfg.focal_alpha,
    )

    m_w = np.zeros_like(model.weights)
    v_w = np.zeros_like(model.weights)
    m_b = np.zeros_like(model.bias)
    v_b = np.zeros_like(model.bias)
    adam_t = 0

    for epoch in range(cfg.epochs):
        plan = plan_epoch(
            split_stats,
            len(train_rows),
            cfg.min_samples_per_class,
            derive_seed(cfg.seed, f"epoch-plan-{epoch}"),
        )
        order = plan.sample_indices
        steps = math.ceil(len(order) / cfg.batch_size)
        loss_total = 0.0
        count_total = 0
        epoch_lr = None
        for b in range(steps):
            sel = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            rows = train_rows[sel]
            x = features[rows]
            y = labels[rows]
            logits = clf_mod.forward(model, x)
            value, grad = loss_fn(logits, y)
            if not np.isfinite(value).all():
                raise TrainingDiverged(epoch, epoch * steps + b, rows)
            loss_total += float(value.sum())
            count_total += len(sel)
            grad_w, grad_b = clf_mod.backward(model, x, grad / len(sel))
            lr = lr_at((epoch % cfg.restart_period_epochs) * steps + b, steps, cfg)
            if epoch_lr is None:
                epoch_lr = lr
            adam_t += 1
            bc1 = 1.0 - cfg.beta1**adam_t
            bc2 = 1.0 - cfg.beta2**adam_t
            for param, g, m, v in (
                (model.weights, grad_w, m_w, v_w),
                (model.bias, grad_b, m_b, v_b),
            ):
                m *= cfg.beta1
                m += (1.0 - cfg.beta1) * g
                v *= cfg.beta2
                v += (1.0 - cfg.beta2) * g * g
                param -= lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.epsilon)
        if n_val > 0:
            val_scores = clf_mod.forward(model, features[val_rows])
            val_map = evaluate(val_scores, labels[val_rows], split_stats).map_all
        else:
            val_map = float("nan")
        log.append(epoch, loss_total / count_total, val_map, epoch_lr)
    return model, log
