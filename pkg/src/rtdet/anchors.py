"""Anchor selection by K-means over box dimensions, plus the small-object
center heatmap used to justify the enhancement crop band."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from rtdet.evaluation import GroundTruthBox
from rtdet.geometry import FrameMeta, area

METRICS = ("iou", "euclidean")
UPDATES = ("mean", "medoid")


@dataclass(frozen=True)
class AnchorSet:
    anchors: list[tuple[float, float]]  # area ascending
    mean_distance: float
    history: list[float] = field(default_factory=list)  # cost after initialisation and each accepted step
    iterations: int = 0

    @property
    def k(self) -> int:
        return len(self.anchors)


@dataclass(frozen=True)
class HeatmapGrid:
    grid_w: int
    grid_h: int
    counts: np.ndarray  # (grid_h, grid_w) int64

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def anchor_distance(box_wh: tuple[float, float], anchor: tuple[float, float]) -> float:
    """1 - IoU of the two boxes placed at a common corner."""
    (w1, h1), (w2, h2) = box_wh, anchor
    if min(w1, h1, w2, h2) <= 0:
        raise ValueError(f"box dims must be positive, got {box_wh} and {anchor}")
    inter = min(w1, w2) * min(h1, h2)
    return 1.0 - inter / (w1 * h1 + w2 * h2 - inter)


def _distance_matrix(points: np.ndarray, centroids: np.ndarray, metric: str) -> np.ndarray:
    if metric == "euclidean":
        return np.linalg.norm(points[:, None, :] - centroids[None, :, :], axis=2)
    inter = np.minimum(points[:, None, 0], centroids[None, :, 0]) * np.minimum(
        points[:, None, 1], centroids[None, :, 1]
    )
    union = (points[:, 0] * points[:, 1])[:, None] + (centroids[:, 0] * centroids[:, 1])[None, :] - inter
    return 1.0 - inter / union


def _seed_plus_plus(points: np.ndarray, k: int, rng: np.random.Generator, metric: str) -> np.ndarray:
    centroids = [points[rng.integers(len(points))]]
    nearest = _distance_matrix(points, np.array(centroids), metric)[:, 0]
    for _ in range(1, k):
        weights = nearest**2
        pick = rng.choice(len(points), p=weights / weights.sum())
        centroids.append(points[pick])
        nearest = np.minimum(nearest, _distance_matrix(points, points[pick : pick + 1], metric)[:, 0])
    return np.array(centroids)


def _update(points: np.ndarray, assign: np.ndarray, centroids: np.ndarray, update: str, metric: str) -> np.ndarray:
    new = centroids.copy()
    for c in range(len(centroids)):
        members = points[assign == c]
        if len(members) == 0:
            continue
        if update == "mean":
            new[c] = members.mean(axis=0)
        else:
            within = _distance_matrix(members, members, metric).sum(axis=1)
            new[c] = members[np.argmin(within)]
    return new


def _repair_empty(points: np.ndarray, assign: np.ndarray, centroids: np.ndarray, dist: np.ndarray) -> None:
    used: set[int] = set()
    own = dist[np.arange(len(points)), assign]
    for c in range(len(centroids)):
        if np.any(assign == c):
            continue
        # farthest point from its own centroid, skipping ones already moved
        for p in np.argsort(-own, kind="stable"):
            if p not in used and own[p] > 0:
                centroids[c] = points[p]
                used.add(int(p))
                break


def _step(
    points: np.ndarray, assign: np.ndarray, centroids: np.ndarray, k: int, update: str, metric: str
) -> tuple[np.ndarray, np.ndarray, float]:
    candidate = _update(points, assign, centroids, update, metric)
    dist = _distance_matrix(points, candidate, metric)
    new_assign = dist.argmin(axis=1)
    if len(np.unique(new_assign)) < k:
        _repair_empty(points, new_assign, candidate, dist)
        dist = _distance_matrix(points, candidate, metric)
        new_assign = dist.argmin(axis=1)
    return candidate, new_assign, float(dist.min(axis=1).mean())


def kmeans_anchors(
    boxes: Sequence[tuple[float, float]],
    k: int = 12,
    seed: int = 0,
    max_iters: int = 300,
    tol: float = 1e-6,
    metric: str = "iou",
    update: str = "mean",
) -> AnchorSet:
    """Cluster (w, h) pairs into ``k`` anchors with Lloyd iterations.

    Assignment uses ``1 - IoU`` (or plain Euclidean distance). A step is
    accepted only if it does not raise the mean assignment cost, so the
    recorded ``history`` never increases. Boxes are put in canonical order
    before seeding, which makes the result independent of input order.
    """
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}")
    if update not in UPDATES:
        raise ValueError(f"update must be one of {UPDATES}")
    if len(boxes) == 0:
        raise ValueError("kmeans_anchors needs at least one box")
    points = np.asarray(boxes, dtype=np.float64).reshape(-1, 2)
    if np.any(points <= 0):
        raise ValueError("box dims must be positive")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    n_distinct = len(np.unique(points, axis=0))
    if k > n_distinct:
        raise ValueError(f"k={k} exceeds the {n_distinct} distinct box sizes")

    points = points[np.lexsort((points[:, 1], points[:, 0]))]
    rng = np.random.default_rng(seed)
    centroids = _seed_plus_plus(points, k, rng, metric)

    # seeds are data points; the first update moves them onto cluster
    # centres and counts as initialisation, not as a descent step
    assign = _distance_matrix(points, centroids, metric).argmin(axis=1)
    centroids, assign, cost = _step(points, assign, centroids, k, update, metric)
    history = [cost]
    it = 0
    for it in range(1, max_iters + 1):
        candidate, cand_assign, cand_cost = _step(points, assign, centroids, k, update, metric)
        if cand_cost > cost:
            it -= 1
            break
        movement = float(np.abs(candidate - centroids).max())
        centroids, assign, cost = candidate, cand_assign, cand_cost
        history.append(cost)
        if movement < tol:
            break

    order = np.lexsort((centroids[:, 0], centroids[:, 0] * centroids[:, 1]))
    anchors = [(float(w), float(h)) for w, h in centroids[order]]
    return AnchorSet(anchors, cost, history, it)


def small_subset(
    boxes: Sequence[tuple[float, float]], area_max: float = 4096.0, mode: str = "area"
) -> list[tuple[float, float]]:
    """Boxes strictly smaller than ``area_max``.

    ``mode="area"`` compares w*h; ``mode="side"`` requires both w and h below
    sqrt(area_max).
    """
    if mode == "area":
        return [b for b in boxes if b[0] * b[1] < area_max]
    if mode == "side":
        side = math.sqrt(area_max)
        return [b for b in boxes if b[0] < side and b[1] < side]
    raise ValueError(f"mode must be 'area' or 'side', got {mode!r}")


def center_heatmap(
    gts: Sequence[GroundTruthBox],
    frames: Mapping[tuple[str, str], FrameMeta],
    grid_w: int = 16,
    grid_h: int = 16,
    small_area_max: float = 1024.0,
) -> HeatmapGrid:
    """Histogram of normalised centers of boxes with area < ``small_area_max``.

    Row index follows y, column index follows x. Centers on the far edge go
    in the last cell.
    """
    if grid_w < 1 or grid_h < 1:
        raise ValueError("grid dims must be >= 1")
    counts = np.zeros((grid_h, grid_w), dtype=np.int64)
    for g in gts:
        if area(g.box) >= small_area_max:
            continue
        frame = frames[g.key]
        cx, cy = g.box.center
        col = min(max(math.floor(cx / frame.width * grid_w), 0), grid_w - 1)
        row = min(max(math.floor(cy / frame.height * grid_h), 0), grid_h - 1)
        counts[row, col] += 1
    return HeatmapGrid(grid_w, grid_h, counts)
