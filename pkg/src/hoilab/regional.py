"""Box-driven attention masking and the pair-detection scoring protocol.

A detected human/object box pair selects the image patches it covers;
attention from the pooled (first) token is restricted to those patches
by adding a large negative sentinel to the first row of the attention
scores.  The sentinel is the most negative finite float64, chosen so the
post-softmax weight of an excluded patch underflows to exactly zero.
Only the first row is masked: patch-to-patch attention is untouched.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .classifier import LinearClassifier, forward
from .losses import _sigmoid
from .taxonomy import ClassTaxonomy

__all__ = [
    "Box",
    "AttentionMask",
    "AttentionParams",
    "MASK_SENTINEL",
    "iou",
    "boxes_to_mask",
    "masked_attention_pool",
    "score_pair",
    "match_predictions",
    "detection_ap",
    "DetectionReport",
    "PairPrediction",
    "PairTruth",
    "load_detections",
    "load_ground_truth",
    "save_detection_report",
]

MASK_SENTINEL = float(np.finfo(np.float64).min)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in normalized [0, 1] image coordinates."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self) -> None:
        vals = (self.x0, self.y0, self.x1, self.y1)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError(f"box coordinates must be finite, got {vals}")
        if not (0.0 <= self.x0 < self.x1 <= 1.0 and 0.0 <= self.y0 < self.y1 <= 1.0):
            raise ValueError(
                f"box must satisfy 0 <= x0 < x1 <= 1 and 0 <= y0 < y1 <= 1, got {vals}"
            )

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    @classmethod
    def from_list(cls, coords) -> "Box":
        if len(coords) != 4:
            raise ValueError(f"box needs 4 coordinates, got {coords!r}")
        return cls(*(float(v) for v in coords))


def iou(a: Box, b: Box) -> float:
    """Intersection over union; 0 when the boxes do not overlap."""
    ix = min(a.x1, b.x1) - max(a.x0, b.x0)
    iy = min(a.y1, b.y1) - max(a.y0, b.y0)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


@dataclass(frozen=True)
class AttentionMask:
    """Additive score mask over (1 + P*P) tokens; first token is the pool."""

    grid_size: int
    phi: np.ndarray

    def __post_init__(self) -> None:
        t = self.grid_size * self.grid_size + 1
        if self.phi.shape != (t, t):
            raise ValueError(f"phi must have shape ({t}, {t}), got {self.phi.shape}")

    @property
    def num_tokens(self) -> int:
        return self.phi.shape[0]

    @property
    def included_patches(self) -> np.ndarray:
        """Boolean (P, P) grid of patches the pooled token may attend to."""
        p = self.grid_size
        return (self.phi[0, 1:] == 0.0).reshape(p, p)


def _patch_overlaps(box: Box, grid_size: int) -> np.ndarray:
    """(P, P) bool: does patch (row, col) share positive area with the box."""
    p = grid_size
    edges = np.arange(p + 1) / p
    lo, hi = edges[:-1], edges[1:]
    x_olap = np.minimum(box.x1, hi) - np.maximum(box.x0, lo) > 0.0
    y_olap = np.minimum(box.y1, hi) - np.maximum(box.y0, lo) > 0.0
    return np.outer(y_olap, x_olap)


def boxes_to_mask(human: Box, object_box: Box, grid_size: int) -> AttentionMask:
    """Mask the pool token's attention to patches outside the box union.

    Patch (r, c) covers the half-open cell [c/P, (c+1)/P) x [r/P, (r+1)/P);
    it stays visible when it overlaps either box with positive area.  If
    the boxes are so small that no patch qualifies, the single patch
    containing the union's center is kept so the row stays attendable.
    """
    if grid_size < 1:
        raise ValueError(f"grid_size must be >= 1, got {grid_size}")
    inside = _patch_overlaps(human, grid_size) | _patch_overlaps(object_box, grid_size)
    if not inside.any():
        cx = 0.5 * (min(human.x0, object_box.x0) + max(human.x1, object_box.x1))
        cy = 0.5 * (min(human.y0, object_box.y0) + max(human.y1, object_box.y1))
        col = min(int(cx * grid_size), grid_size - 1)
        row = min(int(cy * grid_size), grid_size - 1)
        inside[row, col] = True
    t = grid_size * grid_size + 1
    phi = np.zeros((t, t))
    phi[0, 1:] = np.where(inside.reshape(-1), 0.0, MASK_SENTINEL)
    return AttentionMask(grid_size=grid_size, phi=phi)


@dataclass(frozen=True)
class AttentionParams:
    """Projection matrices for one attention head."""

    w_query: np.ndarray
    w_key: np.ndarray
    w_value: np.ndarray

    def __post_init__(self) -> None:
        if self.w_query.shape != self.w_key.shape:
            raise ValueError("query and key projections must share a shape")
        if self.w_query.shape[0] != self.w_value.shape[0]:
            raise ValueError("all projections must accept the same token dim")

    @classmethod
    def identity(cls, dim: int) -> "AttentionParams":
        eye = np.eye(dim)
        return cls(w_query=eye, w_key=eye.copy(), w_value=eye.copy())


def masked_attention_pool(
    tokens: np.ndarray,
    mask: AttentionMask,
    params: AttentionParams,
    d_k: int | None = None,
    return_weights: bool = False,
):
    """Single-head attention with the additive mask; returns the pool row.

    scores = Q K^T / sqrt(d_k) + phi, softmax per row, output row 0 of
    (softmax @ V).  Sentinel entries contribute exactly zero weight.
    """
    toks = np.asarray(tokens, dtype=np.float64)
    if toks.ndim != 2:
        raise ValueError(f"tokens must be 2-D, got shape {toks.shape}")
    if toks.shape[0] != mask.num_tokens:
        raise ValueError(
            f"{toks.shape[0]} tokens for a mask over {mask.num_tokens} tokens"
        )
    if toks.shape[1] != params.w_query.shape[0]:
        raise ValueError("token dim does not match the projection matrices")
    if (mask.phi[0] == MASK_SENTINEL).all():
        raise ValueError("pool row is fully masked; nothing to attend to")
    if d_k is None:
        d_k = params.w_query.shape[1]
    if d_k < 1:
        raise ValueError(f"d_k must be >= 1, got {d_k}")
    q = toks @ params.w_query
    k = toks @ params.w_key
    v = toks @ params.w_value
    scores = q @ k.T / np.sqrt(d_k) + mask.phi
    shifted = scores - scores.max(axis=1, keepdims=True)
    weights = np.exp(shifted)
    weights /= weights.sum(axis=1, keepdims=True)
    pooled = weights @ v
    if return_weights:
        return pooled[0], weights
    return pooled[0]


def score_pair(
    clf: LinearClassifier,
    pooled: np.ndarray,
    object_class,
    object_probability: float,
    taxonomy: ClassTaxonomy,
) -> np.ndarray:
    """Per-class detection scores for one box pair.

    sigmoid(logits) * object_probability on classes whose object slot
    matches the detected object; all other classes score exactly 0.
    """
    if not 0.0 <= object_probability <= 1.0:
        raise ValueError(
            f"object_probability must lie in [0, 1], got {object_probability}"
        )
    if len(taxonomy) != clf.num_classes:
        raise ValueError("taxonomy size does not match the classifier head")
    obj_idx = taxonomy.object_index(object_class)
    probs = _sigmoid(forward(clf, np.asarray(pooled, dtype=np.float64)))
    scores = np.zeros(clf.num_classes)
    members = list(taxonomy.classes_with_object(obj_idx))
    scores[members] = probs[members] * object_probability
    return scores


@dataclass(frozen=True)
class PairPrediction:
    scene_id: str
    human_box: Box
    object_box: Box
    score: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.score):
            raise ValueError(f"prediction score must be finite, got {self.score}")


@dataclass(frozen=True)
class PairTruth:
    scene_id: str
    human_box: Box
    object_box: Box


def match_predictions(
    predictions: list[PairPrediction],
    ground_truth: list[PairTruth],
    iou_threshold: float = 0.5,
) -> list[bool]:
    """Greedy one-to-one matching in descending score order.

    A prediction is a true positive when an unmatched ground-truth pair
    in the same scene overlaps it with IoU >= threshold on BOTH boxes.
    Candidates are ranked by min(IoU_human, IoU_object); ties fall to
    the lower ground-truth index.  Returns TP flags in ranked order.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError(f"iou_threshold must lie in (0, 1), got {iou_threshold}")
    order = sorted(range(len(predictions)), key=lambda i: (-predictions[i].score, i))
    taken = [False] * len(ground_truth)
    flags = []
    for pi in order:
        pred = predictions[pi]
        best_gt = -1
        best_key = -1.0
        for gi, gt in enumerate(ground_truth):
            if taken[gi] or gt.scene_id != pred.scene_id:
                continue
            iou_h = iou(pred.human_box, gt.human_box)
            iou_o = iou(pred.object_box, gt.object_box)
            if iou_h < iou_threshold or iou_o < iou_threshold:
                continue
            key = min(iou_h, iou_o)
            if key > best_key:
                best_key = key
                best_gt = gi
        if best_gt >= 0:
            taken[best_gt] = True
            flags.append(True)
        else:
            flags.append(False)
    return flags


def _ap_from_flags(flags: list[bool], n_truth: int) -> float:
    """Prefix-precision AP normalized by the ground-truth count."""
    if n_truth == 0:
        raise ValueError("AP is undefined for a class with no ground truth")
    hits = 0
    total = 0.0
    for rank, flag in enumerate(flags, start=1):
        if flag:
            hits += 1
            total += hits / rank
    return total / n_truth


@dataclass(frozen=True)
class DetectionReport:
    per_class_ap: dict[int, float]
    full_map: float
    rare_map: float | None
    nonrare_map: float | None

    def to_dict(self) -> dict:
        return {
            "per_class_ap": {str(k): v for k, v in sorted(self.per_class_ap.items())},
            "full_map": self.full_map,
            "rare_map": self.rare_map,
            "nonrare_map": self.nonrare_map,
        }


def detection_ap(
    predictions: dict[int, list[PairPrediction]],
    ground_truth: dict[int, list[PairTruth]],
    iou_threshold: float = 0.5,
    rare_classes: frozenset[int] | None = None,
) -> DetectionReport:
    """Per-class detection AP and Full/Rare/Non-rare means.

    Classes enter the report iff they have ground truth; classes with
    ground truth but no predictions score 0.  Rare membership (training
    count below the rarity cutoff) is supplied by the caller; without
    it the subset means are None.
    """
    per_class: dict[int, float] = {}
    for cls, truths in ground_truth.items():
        if not truths:
            continue
        preds = predictions.get(cls, [])
        flags = match_predictions(preds, truths, iou_threshold)
        per_class[cls] = _ap_from_flags(flags, len(truths))
    if not per_class:
        raise ValueError("no ground-truth pairs; detection mAP is undefined")
    values = [per_class[c] for c in sorted(per_class)]
    full_map = sum(values) / len(values)
    rare_map = nonrare_map = None
    if rare_classes is not None:
        rare = [v for c, v in sorted(per_class.items()) if c in rare_classes]
        nonrare = [v for c, v in sorted(per_class.items()) if c not in rare_classes]
        rare_map = sum(rare) / len(rare) if rare else None
        nonrare_map = sum(nonrare) / len(nonrare) if nonrare else None
    return DetectionReport(
        per_class_ap=per_class,
        full_map=full_map,
        rare_map=rare_map,
        nonrare_map=nonrare_map,
    )


def load_detections(path) -> list[dict]:
    """Detection records: scene_id, boxes, object class and probability."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(payload, list):
        raise ValueError(f"{path}: expected a JSON list of detections")
    out = []
    for i, rec in enumerate(payload):
        for key in ("scene_id", "human_box", "object_box", "object_class", "object_probability"):
            if key not in rec:
                raise ValueError(f"{path}: detection {i} is missing field {key!r}")
        out.append(
            {
                "scene_id": str(rec["scene_id"]),
                "human_box": Box.from_list(rec["human_box"]),
                "object_box": Box.from_list(rec["object_box"]),
                "object_class": rec["object_class"],
                "object_probability": float(rec["object_probability"]),
            }
        )
    return out


def load_ground_truth(path) -> list[dict]:
    """Ground-truth records: like detections but with an hoi_class."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(payload, list):
        raise ValueError(f"{path}: expected a JSON list of ground-truth pairs")
    out = []
    for i, rec in enumerate(payload):
        for key in ("scene_id", "human_box", "object_box", "hoi_class"):
            if key not in rec:
                raise ValueError(f"{path}: ground truth {i} is missing field {key!r}")
        out.append(
            {
                "scene_id": str(rec["scene_id"]),
                "human_box": Box.from_list(rec["human_box"]),
                "object_box": Box.from_list(rec["object_box"]),
                "hoi_class": int(rec["hoi_class"]),
            }
        )
    return out


def save_detection_report(report: DetectionReport, path) -> None:
    Path(path).write_text(
        json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
