"""Cross-model consensus filter for ground-truth annotations.

A ground-truth box survives when enough independently trained models
detect it. Boxes nobody can find (heavily occluded objects labelled from
neighbouring frames, for instance) are set aside with the evidence that
condemned them so a reviewer can audit the decision.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from rtdet.evaluation import GroundTruthBox, group_by_frame
from rtdet.geometry import Detection, iou


@dataclass(frozen=True)
class CleanConfig:
    min_models: int = 2
    iou_min: float = 0.5
    score_min: float = 0.1

    def __post_init__(self) -> None:
        if self.min_models < 1:
            raise ValueError(f"min_models must be >= 1, got {self.min_models}")
        if not 0.0 < self.iou_min <= 1.0:
            raise ValueError(f"iou_min must be in (0, 1], got {self.iou_min}")
        if not 0.0 <= self.score_min <= 1.0:
            raise ValueError(f"score_min must be in [0, 1], got {self.score_min}")


@dataclass(frozen=True)
class ModelEvidence:
    matched: bool
    iou: float  # of the matched detection, else best same-category IoU seen
    score: float  # of the detection that produced ``iou``; 0 when none


@dataclass(frozen=True)
class GtVerdict:
    gt: GroundTruthBox
    kept: bool
    evidence: list[ModelEvidence]  # one per model

    @property
    def votes(self) -> int:
        return sum(e.matched for e in self.evidence)


@dataclass(frozen=True)
class CleanResult:
    kept: list[GroundTruthBox]
    removed: list[GroundTruthBox]
    report: list[GtVerdict]  # parallel to the input gts


def _match_model(
    gts: Sequence[GroundTruthBox], dets: Sequence[Detection], cfg: CleanConfig
) -> list[ModelEvidence]:
    """Greedy one-to-one matching of one model's detections to one frame's GT."""
    matched_by: list[tuple[float, float] | None] = [None] * len(gts)
    best_seen = [(0.0, 0.0)] * len(gts)
    ranked = sorted((d for d in dets if d.score >= cfg.score_min), key=lambda d: -d.score)
    for d in ranked:
        best, best_iou = None, -1.0
        for j, g in enumerate(gts):
            if g.category is not d.category:
                continue
            v = iou(d.box, g.box)
            if v > best_seen[j][0]:
                best_seen[j] = (v, d.score)
            if matched_by[j] is None and v >= cfg.iou_min and v > best_iou:
                best, best_iou = j, v
        if best is not None:
            matched_by[best] = (best_iou, d.score)
    return [
        ModelEvidence(True, *m) if m is not None else ModelEvidence(False, *best_seen[j])
        for j, m in enumerate(matched_by)
    ]


def consensus_clean(
    gts: Sequence[GroundTruthBox],
    model_dets: Sequence[Sequence[Detection]],
    cfg: CleanConfig | None = None,
) -> CleanResult:
    """Keep a GT box iff at least ``cfg.min_models`` models match it.

    A model matches a box when one of its detections of the same category,
    scored at least ``score_min``, claims it at IoU >= ``iou_min``. Each model
    assigns its detections greedily by score, one detection per box.
    """
    cfg = cfg or CleanConfig()
    if not model_dets:
        raise ValueError("consensus_clean needs at least one detection set")
    if cfg.min_models > len(model_dets):
        raise ValueError(f"min_models={cfg.min_models} exceeds the {len(model_dets)} detection sets supplied")

    per_model = [group_by_frame(dets) for dets in model_dets]
    by_frame: dict[tuple[str, str], list[int]] = {}
    for i, g in enumerate(gts):
        by_frame.setdefault(g.key, []).append(i)

    evidence: dict[int, list[ModelEvidence]] = {i: [] for i in range(len(gts))}
    for key, idx in by_frame.items():
        frame_gts = [gts[i] for i in idx]
        for dets_by_frame in per_model:
            for i, ev in zip(idx, _match_model(frame_gts, dets_by_frame.get(key, []), cfg)):
                evidence[i].append(ev)

    report = []
    for i, g in enumerate(gts):
        ev = evidence[i]
        report.append(GtVerdict(g, sum(e.matched for e in ev) >= cfg.min_models, ev))
    return CleanResult(
        kept=[v.gt for v in report if v.kept],
        removed=[v.gt for v in report if not v.kept],
        report=report,
    )
