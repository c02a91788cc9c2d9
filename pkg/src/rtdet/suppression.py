"""Greedy hard NMS, single-threshold and class-aware."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from rtdet.geometry import CATEGORIES, Category, Detection

DEFAULT_NMS_IOU: dict[Category, float] = {
    Category.VEHICLE: 0.75,
    Category.PEDESTRIAN: 0.55,
    Category.CYCLIST: 0.55,
}


@dataclass(frozen=True)
class NmsConfig:
    per_category_iou: Mapping[Category, float] = field(default_factory=lambda: dict(DEFAULT_NMS_IOU))
    min_score: float = 0.0

    def __post_init__(self) -> None:
        missing = [c.value for c in CATEGORIES if c not in self.per_category_iou]
        if missing:
            raise ValueError(f"NMS thresholds missing for {missing}")
        for cat, t in self.per_category_iou.items():
            if not 0.0 < t <= 1.0:
                raise ValueError(f"NMS threshold for {Category(cat).value} must be in (0, 1], got {t}")
        if not 0.0 <= self.min_score <= 1.0:
            raise ValueError(f"min_score must be in [0, 1], got {self.min_score}")


def _score_order(scores: np.ndarray) -> np.ndarray:
    # stable mergesort on -score keeps input order among equal scores
    return np.argsort(-scores, kind="stable")


def nms_indices(boxes: np.ndarray, scores: np.ndarray, iou_thresh: float) -> np.ndarray:
    """Indices kept by greedy NMS over ``(n, 4)`` xyxy boxes, highest score first.

    A candidate is discarded when its IoU with an already-kept box is
    ``>= iou_thresh``.
    """
    if not 0.0 < iou_thresh <= 1.0:
        raise ValueError(f"iou_thresh must be in (0, 1], got {iou_thresh}")
    n = len(scores)
    if n == 0:
        return np.empty(0, dtype=np.intp)
    x1, y1, x2, y2 = boxes[:, 0], boxes[:, 1], boxes[:, 2], boxes[:, 3]
    areas = (x2 - x1) * (y2 - y1)
    order = _score_order(scores)

    keep = []
    while order.size > 0:
        i = order[0]
        keep.append(i)
        rest = order[1:]
        iw = np.minimum(x2[i], x2[rest]) - np.maximum(x1[i], x1[rest])
        ih = np.minimum(y2[i], y2[rest]) - np.maximum(y1[i], y1[rest])
        inter = np.where((iw > 0) & (ih > 0), iw * ih, 0.0)
        union = areas[i] + areas[rest] - inter
        with np.errstate(invalid="ignore", divide="ignore"):
            ovr = np.where(union > 0, inter / union, 0.0)
        order = rest[ovr < iou_thresh]
    return np.asarray(keep, dtype=np.intp)


def _as_arrays(dets: Sequence[Detection]) -> tuple[np.ndarray, np.ndarray]:
    boxes = np.array([d.box.as_tuple() for d in dets], dtype=np.float64).reshape(-1, 4)
    scores = np.array([d.score for d in dets], dtype=np.float64)
    return boxes, scores


def nms(dets: Sequence[Detection], iou_thresh: float) -> list[Detection]:
    """Category-agnostic greedy NMS; every box competes with every other."""
    boxes, scores = _as_arrays(dets)
    return [dets[i] for i in nms_indices(boxes, scores, iou_thresh)]


def class_aware_nms_indices(dets: Sequence[Detection], cfg: NmsConfig | None = None) -> list[int]:
    cfg = cfg or NmsConfig()
    kept: list[int] = []
    for cat in CATEGORIES:
        idx = [i for i, d in enumerate(dets) if d.category is cat and d.score >= cfg.min_score]
        if not idx:
            continue
        boxes, scores = _as_arrays([dets[i] for i in idx])
        kept.extend(idx[j] for j in nms_indices(boxes, scores, cfg.per_category_iou[cat]))
    kept.sort(key=lambda i: (-dets[i].score, i))
    return kept


def class_aware_nms(dets: Sequence[Detection], cfg: NmsConfig | None = None) -> list[Detection]:
    """Run NMS separately per category with that category's IoU threshold.

    Boxes of different categories never suppress each other. The merged
    result is ordered by score descending, ties by input position.
    """
    return [dets[i] for i in class_aware_nms_indices(dets, cfg)]
