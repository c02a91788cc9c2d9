"""Per-category average precision with L1/L2 difficulty levels.

Matching is greedy in score order: each detection takes the unmatched
ground-truth box of its category with the highest IoU, provided that IoU
reaches the category threshold. At L1, difficulty-2 boxes are don't-care
targets: a detection landing on one is neither rewarded nor punished.
"""

from __future__ import annotations

import enum
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from rtdet.geometry import CATEGORIES, BBox, Category, Detection, area, iou

DEFAULT_EVAL_IOU: dict[Category, float] = {
    Category.VEHICLE: 0.7,
    Category.PEDESTRIAN: 0.5,
    Category.CYCLIST: 0.5,
}


class Level(enum.IntEnum):
    L1 = 1
    L2 = 2

    @classmethod
    def parse(cls, name: str | int) -> "Level":
        if isinstance(name, int):
            return cls(name)
        return cls[name.upper()]


class Label(str, enum.Enum):
    TP = "TP"
    FP = "FP"
    IGNORED = "IGNORED"


@dataclass(frozen=True, slots=True)
class GroundTruthBox:
    box: BBox
    category: Category
    difficulty: int
    id: str
    frame_id: str
    camera_id: str

    def __post_init__(self) -> None:
        if self.difficulty not in (1, 2):
            raise ValueError(f"difficulty must be 1 or 2, got {self.difficulty}")

    @property
    def key(self) -> tuple[str, str]:
        return self.frame_id, self.camera_id


@dataclass(frozen=True)
class EvalConfig:
    per_category_iou: Mapping[Category, float] = field(default_factory=lambda: dict(DEFAULT_EVAL_IOU))
    level: Level = Level.L2

    def __post_init__(self) -> None:
        for cat in CATEGORIES:
            t = self.per_category_iou.get(cat)
            if t is None or not 0.0 < t <= 1.0:
                raise ValueError(f"eval IoU threshold for {cat.value} must be in (0, 1], got {t}")


@dataclass(frozen=True)
class FrameMatch:
    labels: list[Label]  # parallel to the input detections
    matched_gt: list[int | None]  # index into the input gts, or None
    positives: dict[Category, int]


@dataclass(frozen=True)
class PRPoint:
    recall: float
    precision: float


@dataclass(frozen=True)
class CategoryResult:
    ap: float  # nan when the category is excluded (no GT and no detections)
    positives: int
    tp: int
    fp: int
    ignored: int

    @property
    def recall(self) -> float:
        return self.tp / self.positives if self.positives else float("nan")


@dataclass(frozen=True)
class APResult:
    level: Level
    per_category: dict[Category, CategoryResult]

    @property
    def ap(self) -> dict[Category, float]:
        return {c: r.ap for c, r in self.per_category.items()}

    @property
    def mean_ap(self) -> float:
        vals = [r.ap for r in self.per_category.values() if not math.isnan(r.ap)]
        return float(np.mean(vals)) if vals else float("nan")


def _is_positive(gt: GroundTruthBox, level: Level) -> bool:
    return level is Level.L2 or gt.difficulty == 1


def match_frame(
    dets: Sequence[Detection], gts: Sequence[GroundTruthBox], cfg: EvalConfig | None = None
) -> FrameMatch:
    cfg = cfg or EvalConfig()
    keys = {d.key for d in dets} | {g.key for g in gts}
    if len(keys) > 1:
        raise ValueError(f"match_frame got boxes from several frames: {sorted(keys)}")

    labels: list[Label] = [Label.FP] * len(dets)
    matched: list[int | None] = [None] * len(dets)
    taken = [False] * len(gts)
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    for i in order:
        d = dets[i]
        thresh = cfg.per_category_iou[d.category]
        best, best_iou = None, -1.0
        for j, g in enumerate(gts):
            if taken[j] or g.category is not d.category:
                continue
            v = iou(d.box, g.box)
            if v >= thresh and v > best_iou:
                best, best_iou = j, v
        if best is None:
            continue
        taken[best] = True
        matched[i] = best
        labels[i] = Label.TP if _is_positive(gts[best], cfg.level) else Label.IGNORED

    positives = {c: 0 for c in CATEGORIES}
    for g in gts:
        if _is_positive(g, cfg.level):
            positives[g.category] += 1
    return FrameMatch(labels, matched, positives)


def pr_curve(labels: Sequence[Label], scores: Sequence[float], total_positives: int) -> list[PRPoint]:
    """Precision/recall at every distinct score, swept from high to low.

    IGNORED detections take no part. With no positives, recall is reported
    as 0 throughout.
    """
    pairs = [(s, lab) for s, lab in zip(scores, labels) if lab is not Label.IGNORED]
    pairs.sort(key=lambda p: -p[0])
    points: list[PRPoint] = []
    tp = fp = 0
    for k, (s, lab) in enumerate(pairs):
        if lab is Label.TP:
            tp += 1
        else:
            fp += 1
        if k + 1 < len(pairs) and pairs[k + 1][0] == s:
            continue
        recall = tp / total_positives if total_positives > 0 else 0.0
        points.append(PRPoint(recall, tp / (tp + fp)))
    return points


def average_precision(curve: Sequence[PRPoint]) -> float:
    """All-points interpolated AP: area under the monotone precision envelope."""
    if not curve:
        return 0.0
    recalls = np.array([p.recall for p in curve])
    precisions = np.array([p.precision for p in curve])
    envelope = np.maximum.accumulate(precisions[::-1])[::-1]
    steps = np.diff(np.concatenate(([0.0], recalls)))
    return float(np.sum(steps * envelope))


def group_by_frame(items: Iterable) -> dict[tuple[str, str], list]:
    out: dict[tuple[str, str], list] = defaultdict(list)
    for it in items:
        out[it.key].append(it)
    return out


def match_all(
    dets: Sequence[Detection], gts: Sequence[GroundTruthBox], cfg: EvalConfig
) -> list[tuple[list[Detection], list[GroundTruthBox], FrameMatch]]:
    dets_by = group_by_frame(dets)
    gts_by = group_by_frame(gts)
    out = []
    for key in sorted(set(dets_by) | set(gts_by)):
        fd, fg = dets_by.get(key, []), gts_by.get(key, [])
        out.append((fd, fg, match_frame(fd, fg, cfg)))
    return out


def evaluate(
    dets: Sequence[Detection], gts: Sequence[GroundTruthBox], cfg: EvalConfig | None = None
) -> APResult:
    """Pool matches over all frames and compute AP per category.

    A category with no positives scores 0 if it has detections and is left
    out of the mean (AP reported as nan) if it has none.
    """
    cfg = cfg or EvalConfig()
    labels: dict[Category, list[Label]] = {c: [] for c in CATEGORIES}
    scores: dict[Category, list[float]] = {c: [] for c in CATEGORIES}
    positives = {c: 0 for c in CATEGORIES}
    for fd, _, m in match_all(dets, gts, cfg):
        for d, lab in zip(fd, m.labels):
            labels[d.category].append(lab)
            scores[d.category].append(d.score)
        for c, n in m.positives.items():
            positives[c] += n

    per_cat = {}
    for c in CATEGORIES:
        labs = labels[c]
        counts = {lab: sum(1 for x in labs if x is lab) for lab in Label}
        n_scored = counts[Label.TP] + counts[Label.FP]
        if positives[c] == 0:
            ap = float("nan") if n_scored == 0 else 0.0
        else:
            ap = average_precision(pr_curve(labs, scores[c], positives[c]))
        per_cat[c] = CategoryResult(ap, positives[c], counts[Label.TP], counts[Label.FP], counts[Label.IGNORED])
    return APResult(cfg.level, per_cat)


def recall_for_area(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruthBox],
    cfg: EvalConfig | None = None,
    area_max: float = 1024.0,
) -> float:
    """Fraction of positive GT boxes with area < ``area_max`` that some detection matched."""
    cfg = cfg or EvalConfig()
    hit = total = 0
    for fd, fg, m in match_all(dets, gts, cfg):
        found = {j for j, lab in zip(m.matched_gt, m.labels) if lab is Label.TP}
        for j, g in enumerate(fg):
            if _is_positive(g, cfg.level) and area(g.box) < area_max:
                total += 1
                hit += j in found
    return hit / total if total else float("nan")
