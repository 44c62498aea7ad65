"""Segmentation and robustness scores.

Points whose ground truth is ``ignore`` (class 0) never enter the confusion
matrix. A prediction of class 0 on a valid point is an error: it lands in
column 0, which counts towards the row's union but matches no class.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyList,
    LengthMismatch,
    LidarcError,
    NoValidClasses,
    WrongCorruptionCount,
    ZeroCleanScore,
)
from .scan_io import LabelSet

N_CORRUPTIONS = 6


def _semantic(labels) -> np.ndarray:
    if isinstance(labels, LabelSet):
        return labels.semantic.astype(np.int64)
    return np.asarray(labels, dtype=np.int64) & 0xFFFF


class ConfusionMatrix:
    """Rows are ground-truth classes, columns predictions, both ``0..K-1``."""

    def __init__(self, num_classes: int, counts: np.ndarray | None = None):
        if num_classes < 2:
            raise LidarcError("need at least one valid class besides ignore")
        self.num_classes = num_classes
        self.counts = np.zeros((num_classes, num_classes), dtype=np.int64) if counts is None else counts

    def accumulate(self, gt, pred) -> "ConfusionMatrix":
        """Return a new matrix with ``(gt, pred)`` pairs added."""
        g = _semantic(gt)
        p = _semantic(pred)
        if g.shape != p.shape:
            raise LengthMismatch(f"{len(g)} ground-truth vs {len(p)} predicted labels")
        valid = g != 0
        g, p = g[valid], p[valid]
        k = self.num_classes
        if g.size and (g.max() >= k or p.max() >= k):
            raise LidarcError(f"label id >= num_classes ({k})")
        add = np.bincount(g * k + p, minlength=k * k).reshape(k, k)
        return ConfusionMatrix(k, self.counts + add)

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.num_classes != self.num_classes:
            raise LidarcError("cannot merge matrices with different class counts")
        return ConfusionMatrix(self.num_classes, self.counts + other.counts)

    def __eq__(self, other) -> bool:
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)

    def iou(self) -> np.ndarray:
        """Per-class IoU in [0, 1]; NaN for classes absent from ground truth and row 0."""
        cm = self.counts.astype(np.float64)
        tp = np.diag(cm)
        union = cm.sum(axis=1) + cm.sum(axis=0) - tp
        present = cm.sum(axis=1) > 0
        present[0] = False
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(present, tp / union, np.nan)
        return out

    def miou(self) -> float:
        return miou(self)


def accumulate(cm: ConfusionMatrix, gt, pred) -> ConfusionMatrix:
    return cm.accumulate(gt, pred)


def miou(cm: ConfusionMatrix) -> float:
    """Mean IoU in percent over classes with ground-truth points."""
    iou = cm.iou()
    if np.all(np.isnan(iou)):
        raise NoValidClasses("no class has ground-truth points")
    return float(np.nanmean(iou) * 100.0)


def corruption_score(per_intensity) -> float:
    """Mean mIoU over a corruption's intensity levels."""
    vals = [float(v) for v in per_intensity]
    if not vals:
        raise EmptyList("no intensity scores given")
    return float(np.mean(vals))


@dataclass
class CorruptionResult:
    name: str
    per_intensity: dict
    score: float
    relative: float


@dataclass
class RobustnessReport:
    clean: float
    corruptions: list = field(default_factory=list)
    rmiou: float | None = None
    mr: float | None = None
    per_class_iou: dict = field(default_factory=dict)

    def to_json(self, decimals: int = 1) -> dict:
        def r(v):
            return None if v is None else round(float(v), decimals)

        return {
            "clean_miou": r(self.clean),
            "rmiou": r(self.rmiou),
            "mr": r(self.mr),
            "corruptions": [
                {
                    "name": c.name,
                    "per_intensity": {k: r(v) for k, v in c.per_intensity.items()},
                    "miou": r(c.score),
                    "relative": r(c.relative),
                }
                for c in self.corruptions
            ],
            "per_class_iou": {
                setting: {str(k): r(v) for k, v in ious.items()}
                for setting, ious in self.per_class_iou.items()
            },
        }


def robustness_summary(clean: float, scores, per_intensity: dict | None = None) -> RobustnessReport:
    """Combine the clean mIoU with the six per-corruption scores.

    ``scores`` is a mapping ``name -> S^c`` or a sequence of six values.
    RmIoU is their mean; R^c and mR are ratios to ``clean``, in percent.
    """
    if isinstance(scores, dict):
        items = list(scores.items())
    else:
        items = [(f"corruption_{i}", v) for i, v in enumerate(scores)]
    if len(items) != N_CORRUPTIONS:
        raise WrongCorruptionCount(f"expected {N_CORRUPTIONS} corruption scores, got {len(items)}")
    if not clean > 0:
        raise ZeroCleanScore("clean mIoU must be positive")
    per_intensity = per_intensity or {}
    results = [
        CorruptionResult(name, dict(per_intensity.get(name, {})), float(s), float(s) / clean * 100.0)
        for name, s in items
    ]
    rmiou = sum(c.score for c in results) / N_CORRUPTIONS
    return RobustnessReport(float(clean), results, rmiou, rmiou / clean * 100.0)
