"""Scaled linear classification head and its initialisers.

The head computes s_i = gamma * <x, w_i> + b_i.  The scale gamma is a
fixed hyperparameter, never trained, and multiplies only the feature
term.  Weights start either from a fan-based random scheme or as an
exact copy of row-normalized class text embeddings with zero bias, which
is the mechanism under study here.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "EmbeddingMatrix",
    "LinearClassifier",
    "init_random",
    "init_from_embeddings",
    "forward",
    "backward",
    "save_checkpoint",
    "load_checkpoint",
    "save_embeddings",
    "load_embeddings",
    "ROW_NORM_TOL",
]

ROW_NORM_TOL = 1e-9
INIT_SCHEMES = ("xavier", "kaiming")


@dataclass(frozen=True)
class EmbeddingMatrix:
    """C x d matrix whose rows are unit-norm class embeddings."""

    rows: np.ndarray

    def __post_init__(self) -> None:
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2:
            raise ValueError(f"embedding matrix must be 2-D, got shape {rows.shape}")
        if not np.isfinite(rows).all():
            raise ValueError("embedding matrix contains non-finite entries")
        norms = np.linalg.norm(rows, axis=1)
        off = np.abs(norms - 1.0)
        if (off > ROW_NORM_TOL).any():
            i = int(np.argmax(off))
            raise ValueError(
                f"embedding row {i} has norm {norms[i]!r}, expected 1 within {ROW_NORM_TOL}"
            )
        object.__setattr__(self, "rows", rows)

    @property
    def num_classes(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    @classmethod
    def from_raw(cls, raw: np.ndarray) -> "EmbeddingMatrix":
        """Normalize arbitrary rows to unit length; zero rows are rejected."""
        arr = np.asarray(raw, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"embedding matrix must be 2-D, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("embedding matrix contains non-finite entries")
        norms = np.linalg.norm(arr, axis=1)
        if (norms == 0).any():
            i = int(np.flatnonzero(norms == 0)[0])
            raise ValueError(f"embedding row {i} is all zeros and cannot be normalized")
        return cls(arr / norms[:, None])


@dataclass
class LinearClassifier:
    """Per-class weight rows, biases, and the constant logit scale."""

    weights: np.ndarray
    bias: np.ndarray
    gamma: float
    init_mode: str

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ValueError(f"weights must be 2-D, got shape {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[0],):
            raise ValueError(
                f"bias shape {self.bias.shape} does not match {self.weights.shape[0]} classes"
            )
        if not np.isfinite(self.weights).all() or not np.isfinite(self.bias).all():
            raise ValueError("classifier parameters contain non-finite entries")
        if not np.isfinite(self.gamma) or self.gamma <= 0:
            raise ValueError(f"gamma must be finite and positive, got {self.gamma}")

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def clone(self) -> "LinearClassifier":
        return copy.deepcopy(self)


def init_random(
    num_classes: int,
    dim: int,
    scheme: str = "kaiming",
    seed: int = 0,
    gamma: float = 100.0,
) -> LinearClassifier:
    """Gaussian fan-based weights, zero bias.

    xavier: std = sqrt(2 / (dim + num_classes)); kaiming: std = sqrt(2 / dim).
    """
    if num_classes < 1 or dim < 1:
        raise ValueError("num_classes and dim must be positive")
    if scheme == "xavier":
        std = np.sqrt(2.0 / (dim + num_classes))
    elif scheme == "kaiming":
        std = np.sqrt(2.0 / dim)
    else:
        raise ValueError(f"unknown init scheme {scheme!r}; expected one of {INIT_SCHEMES}")
    rng = np.random.default_rng(seed)
    weights = rng.normal(0.0, std, size=(num_classes, dim))
    return LinearClassifier(
        weights=weights,
        bias=np.zeros(num_classes),
        gamma=gamma,
        init_mode="random",
    )


def init_from_embeddings(
    embeddings: EmbeddingMatrix, gamma: float = 100.0
) -> LinearClassifier:
    """Copy the embedding rows verbatim as weights; bias starts at zero."""
    return LinearClassifier(
        weights=embeddings.rows.copy(),
        bias=np.zeros(embeddings.num_classes),
        gamma=gamma,
        init_mode="embedding",
    )


def forward(clf: LinearClassifier, x: np.ndarray) -> np.ndarray:
    """Logits gamma * x W^T + b for one feature vector (d,) or a batch (N, d)."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim not in (1, 2):
        raise ValueError(f"features must be 1-D or 2-D, got shape {arr.shape}")
    if arr.shape[-1] != clf.dim:
        raise ValueError(f"feature dim {arr.shape[-1]} does not match head dim {clf.dim}")
    if not np.isfinite(arr).all():
        raise ValueError("features contain non-finite entries")
    return clf.gamma * (arr @ clf.weights.T) + clf.bias


def backward(
    clf: LinearClassifier, x: np.ndarray, grad_s: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Parameter gradients given d(loss)/d(logits).

    For batched inputs the per-sample contributions are summed; divide
    grad_s by the batch size beforehand for a mean reduction.
    """
    arr = np.asarray(x, dtype=np.float64)
    g = np.asarray(grad_s, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
        g = g[None, :]
    if arr.ndim != 2 or g.ndim != 2 or arr.shape[0] != g.shape[0]:
        raise ValueError(
            f"incompatible shapes: features {arr.shape}, logit grads {g.shape}"
        )
    if g.shape[1] != clf.num_classes or arr.shape[1] != clf.dim:
        raise ValueError("gradient width or feature dim does not match the head")
    grad_w = clf.gamma * (g.T @ arr)
    grad_b = g.sum(axis=0)
    return grad_w, grad_b


def save_checkpoint(clf: LinearClassifier, path) -> None:
    """Write the head as JSON with full-precision (round-trippable) floats."""
    payload = {
        "C": clf.num_classes,
        "d": clf.dim,
        "gamma": clf.gamma,
        "init_mode": clf.init_mode,
        "W": [float(v) for v in clf.weights.reshape(-1)],
        "b": [float(v) for v in clf.bias],
    }
    Path(path).write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def load_checkpoint(path) -> LinearClassifier:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    required = {"C", "d", "gamma", "init_mode", "W", "b"}
    missing = required - payload.keys()
    if missing:
        raise ValueError(f"checkpoint {path} is missing fields {sorted(missing)}")
    c, d = int(payload["C"]), int(payload["d"])
    weights = np.asarray(payload["W"], dtype=np.float64)
    if weights.shape != (c * d,):
        raise ValueError(f"checkpoint W has {weights.shape[0]} values, expected {c * d}")
    bias = np.asarray(payload["b"], dtype=np.float64)
    if bias.shape != (c,):
        raise ValueError(f"checkpoint b has {bias.shape[0]} values, expected {c}")
    return LinearClassifier(
        weights=weights.reshape(c, d),
        bias=bias,
        gamma=float(payload["gamma"]),
        init_mode=str(payload["init_mode"]),
    )


def save_embeddings(embeddings: EmbeddingMatrix, path) -> None:
    """One `<class_index> <d floats>` line per class, full precision."""
    lines = []
    for i, row in enumerate(embeddings.rows):
        floats = " ".join(repr(float(v)) for v in row)
        lines.append(f"{i} {floats}\n")
    Path(path).write_text("".join(lines), encoding="utf-8")


def load_embeddings(path, num_classes: int | None = None) -> EmbeddingMatrix:
    """Parse an embedding table; rows are re-normalized, zero rows rejected."""
    rows: dict[int, np.ndarray] = {}
    dim: int | None = None
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        try:
            idx = int(parts[0])
            vec = np.array([float(p) for p in parts[1:]], dtype=np.float64)
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: malformed embedding line") from exc
        if vec.size == 0:
            raise ValueError(f"{path}:{lineno}: embedding row has no values")
        if dim is None:
            dim = vec.size
        elif vec.size != dim:
            raise ValueError(
                f"{path}:{lineno}: row has {vec.size} values, expected {dim}"
            )
        if idx in rows:
            raise ValueError(f"{path}:{lineno}: duplicate class index {idx}")
        rows[idx] = vec
    if not rows:
        raise ValueError(f"{path}: no embedding rows found")
    count = num_classes if num_classes is not None else max(rows) + 1
    missing = sorted(set(range(count)) - rows.keys())
    if missing:
        raise ValueError(f"{path}: missing rows for classes {missing[:8]}")
    raw_matrix = np.stack([rows[i] for i in range(count)])
    return EmbeddingMatrix.from_raw(raw_matrix)
