"""Rank-based average precision and few-shot mAP reporting."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .taxonomy import ClassStats

__all__ = [
    "EvalReport",
    "average_precision",
    "evaluate",
    "save_report_json",
    "save_report_csv",
    "FEW_SHOT_KS",
]

FEW_SHOT_KS = (1, 5, 10)


def average_precision(scores: np.ndarray, truth: np.ndarray) -> float:
    """AP of one ranking: mean precision at each positive's rank.

    Samples sort by descending score; equal scores break toward the
    lower sample index.  `truth` holds sign labels (+1 positive).
    """
    s = np.asarray(scores, dtype=np.float64)
    t = np.asarray(truth)
    if s.ndim != 1 or s.shape != t.shape:
        raise ValueError(f"scores {s.shape} and truth {t.shape} must be equal 1-D shapes")
    if not np.isfinite(s).all():
        raise ValueError("scores contain non-finite entries")
    positive = t == 1
    n_pos = int(positive.sum())
    if n_pos == 0:
        raise ValueError("average precision is undefined without positives")
    order = np.lexsort((np.arange(s.shape[0]), -s))
    hits = positive[order]
    cum = np.cumsum(hits)
    ranks = np.arange(1, s.shape[0] + 1)
    # fsum keeps the precision sum exactly rounded, so the result does
    # not depend on accumulation order.
    return math.fsum(cum[hits] / ranks[hits]) / n_pos


@dataclass(frozen=True)
class EvalReport:
    """Per-class APs plus overall and few-shot means.

    `ap` holds NaN for skipped classes (no test positives); those
    classes are excluded from every mean.  A few-shot mean over an empty
    class set is reported as None.
    """

    ap: np.ndarray
    map_all: float
    map_few: dict[int, float | None]
    skipped_classes: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "ap": [None if np.isnan(v) else float(v) for v in self.ap],
            "map_all": float(self.map_all),
            "map_few": {str(k): v for k, v in self.map_few.items()},
            "skipped_classes": list(self.skipped_classes),
        }


def evaluate(
    scores: np.ndarray,
    truth: np.ndarray,
    stats: ClassStats,
    few_shot_ks: tuple[int, ...] = FEW_SHOT_KS,
) -> EvalReport:
    """Score a prediction matrix against sign labels, class by class.

    Few-shot subsets come from `stats` (training-set positive counts),
    not from the evaluation labels.
    """
    s = np.asarray(scores, dtype=np.float64)
    t = np.asarray(truth)
    if s.ndim != 2 or s.shape != t.shape:
        raise ValueError(f"scores {s.shape} and truth {t.shape} must be equal 2-D shapes")
    num_classes = s.shape[1]
    if stats.num_classes != num_classes:
        raise ValueError(
            f"stats cover {stats.num_classes} classes but scores have {num_classes}"
        )
    ap = np.full(num_classes, np.nan)
    skipped = []
    for c in range(num_classes):
        if (t[:, c] == 1).any():
            ap[c] = average_precision(s[:, c], t[:, c])
        else:
            skipped.append(c)
    scored = ~np.isnan(ap)
    map_all = float(ap[scored].mean()) if scored.any() else float("nan")
    map_few: dict[int, float | None] = {}
    for k in few_shot_ks:
        members = sorted(stats.few_shot_at(k))
        values = [ap[c] for c in members if scored[c]]
        map_few[k] = float(sum(values) / len(values)) if values else None
    return EvalReport(
        ap=ap,
        map_all=map_all,
        map_few=map_few,
        skipped_classes=tuple(skipped),
    )


def save_report_json(report: EvalReport, path) -> None:
    Path(path).write_text(
        json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def save_report_csv(report: EvalReport, path) -> None:
    """Flat `metric,value` summary; empty few-shot tiers serialize as blank."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        writer.writerow(["map_all", repr(report.map_all)])
        for k, v in sorted(report.map_few.items()):
            writer.writerow([f"map_few_{k}", "" if v is None else repr(v)])
        writer.writerow(["skipped_classes", len(report.skipped_classes)])
