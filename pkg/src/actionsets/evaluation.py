"""Frame-level detection evaluation: IoU, per-class AP, and mAP.

The protocol is the standard one for frame-level action detection:
predictions are ranked by score (ties broken by frame id, then input
order), each prediction greedily matches the unmatched same-frame
ground-truth box of the same class with the highest IoU at or above the
threshold, each ground truth matches at most once, and AP is the area
under the precision envelope over all recall points (all-point
interpolation, not 11-point). Classes with no ground truth have undefined
AP and are excluded from the mean; their false positives simply never
match anything.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import BoundingBox, GroundTruthRecord, PredictionRecord, ValidationError


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes, in [0, 1]."""
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def _ranked(preds: Sequence[PredictionRecord]) -> list[PredictionRecord]:
    order = sorted(
        range(len(preds)),
        key=lambda i: (-preds[i].score, preds[i].frame_id, i),
    )
    return [preds[i] for i in order]


def average_precision(
    preds: Sequence[PredictionRecord],
    gts: Sequence[GroundTruthRecord],
    class_id: int,
    iou_threshold: float = 0.5,
) -> float:
    """All-point-interpolated AP for one class; NaN when the class has no GT."""
    gt = [g for g in gts if g.class_id == class_id]
    if not gt:
        return math.nan
    pred = _ranked([p for p in preds if p.class_id == class_id])

    by_frame: dict[int, list[int]] = {}
    for idx, g in enumerate(gt):
        by_frame.setdefault(g.frame_id, []).append(idx)
    matched = [False] * len(gt)

    tp = np.zeros(len(pred), dtype=np.float64)
    for rank, p in enumerate(pred):
        best_iou = 0.0
        best_idx = -1
        for idx in by_frame.get(p.frame_id, ()):
            if matched[idx]:
                continue
            overlap = iou(p.box, gt[idx].box)
            if overlap >= iou_threshold and overlap > best_iou:
                best_iou = overlap
                best_idx = idx
        if best_idx >= 0:
            matched[best_idx] = True
            tp[rank] = 1.0

    if len(pred) == 0:
        return 0.0
    cum_tp = np.cumsum(tp)
    cum_fp = np.cumsum(1.0 - tp)
    recall = cum_tp / len(gt)
    precision = cum_tp / (cum_tp + cum_fp)

    # Precision envelope over all recall points; area under the stepwise curve.
    mrec = np.concatenate(([0.0], recall))
    mpre = np.concatenate(([0.0], precision))
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    return float(np.sum((mrec[1:] - mrec[:-1]) * mpre[1:]))


@dataclass(frozen=True)
class EvalReport:
    """Per-class AP (NaN where no ground truth exists) and their mean."""

    ap: tuple[float, ...]
    gt_counts: tuple[int, ...]
    mean_ap: float
    iou_threshold: float

    def evaluated_classes(self) -> tuple[int, ...]:
        return tuple(c for c, n in enumerate(self.gt_counts) if n > 0)


def mean_average_precision(
    preds: Sequence[PredictionRecord],
    gts: Sequence[GroundTruthRecord],
    class_count: int,
    iou_threshold: float = 0.5,
) -> EvalReport:
    """Unweighted mean of per-class AP over the classes with ground truth."""
    if class_count < 1:
        raise ValidationError(f"class count must be positive, got {class_count}")
    for p in preds:
        if p.class_id >= class_count:
            raise ValidationError(
                f"prediction class {p.class_id} out of range [0, {class_count})"
            )
    gt_counts = [0] * class_count
    for g in gts:
        if g.class_id >= class_count:
            raise ValidationError(
                f"ground-truth class {g.class_id} out of range [0, {class_count})"
            )
        gt_counts[g.class_id] += 1
    if not any(gt_counts):
        raise ValidationError("empty ground truth: no class has any instance")

    ap = [
        average_precision(preds, gts, c, iou_threshold) if gt_counts[c] else math.nan
        for c in range(class_count)
    ]
    evaluated = [ap[c] for c in range(class_count) if gt_counts[c] > 0]
    return EvalReport(
        ap=tuple(ap),
        gt_counts=tuple(gt_counts),
        mean_ap=float(np.mean(evaluated)),
        iou_threshold=iou_threshold,
    )
