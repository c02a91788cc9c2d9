"""Two-pass scale-enhanced inference, class-wise ensembling and latency accounting.

Each backend sees the frame twice: once as-is (result A) and once as an
enlarged crop of the central horizontal band (result B). Result B is mapped
back to frame coordinates, stripped of anything larger than 96x96, merged
with result A and de-duplicated with class-aware NMS. The ensemble then
takes each category from the backend configured for it.
"""

from __future__ import annotations

import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Protocol, Sequence

import numpy as np

from rtdet.geometry import (
    CATEGORIES,
    Category,
    Detection,
    FrameMeta,
    ViewTransform,
    apply_transform,
    area,
    clip_box,
    clip_to_frame,
    invert_transform,
    make_enhancement_view,
)
from rtdet.suppression import NmsConfig, class_aware_nms_indices

STAGES = ("plain", "enhanced", "merge", "ensemble")


class DetectorBackend(Protocol):
    """Anything that turns a frame seen through a view into detections.

    Boxes come back in VIEW coordinates, within ``[0, out_width] x [0, out_height]``.
    Output must be deterministic for a given (backend, frame, view).
    """

    name: str

    def detect(self, frame: FrameMeta, view: ViewTransform) -> list[Detection]: ...


class BackendError(RuntimeError):
    def __init__(self, backend: str, frame: FrameMeta, cause: BaseException):
        super().__init__(f"backend {backend!r} failed on frame {frame.frame_id}/{frame.camera_id}: {cause}")
        self.backend = backend
        self.frame_id = frame.frame_id
        self.camera_id = frame.camera_id


@dataclass(frozen=True)
class EnhancementConfig:
    crop: tuple[float, float, float, float] = (0.0, 0.3, 1.0, 0.8)
    scale: float = 1.5
    stride: int = 64
    small_area_max: float = 96.0 * 96.0
    nms: NmsConfig = field(default_factory=NmsConfig)

    def __post_init__(self) -> None:
        x_lo, y_lo, x_hi, y_hi = self.crop
        if not (0.0 <= x_lo < x_hi <= 1.0 and 0.0 <= y_lo < y_hi <= 1.0):
            raise ValueError(f"crop fractions must satisfy 0 <= lo < hi <= 1, got {self.crop}")
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if not self.small_area_max > 0:
            raise ValueError(f"small_area_max must be positive, got {self.small_area_max}")

    @classmethod
    def identity(cls, **kw) -> "EnhancementConfig":
        return cls(crop=(0.0, 0.0, 1.0, 1.0), scale=1.0, stride=1, **kw)

    def view(self, frame: FrameMeta) -> ViewTransform:
        return make_enhancement_view(frame, *self.crop, scale=self.scale, stride=self.stride)


DEFAULT_SOURCES: dict[Category, str] = {
    Category.VEHICLE: "w6",
    Category.PEDESTRIAN: "w6",
    Category.CYCLIST: "p6",
}


@dataclass(frozen=True)
class EnsembleConfig:
    source: Mapping[Category, str] = field(default_factory=lambda: dict(DEFAULT_SOURCES))

    def __post_init__(self) -> None:
        missing = [c.value for c in CATEGORIES if c not in self.source]
        if missing:
            raise ValueError(f"ensemble source missing for {missing}")

    @property
    def backends(self) -> list[str]:
        return sorted(set(self.source.values()))


@dataclass
class PassDiagnostics:
    """Counters from enhanced passes; shared across threads, hence the lock."""

    padding_boxes: int = 0  # view boxes reaching into the stride padding
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def add_padding(self, n: int) -> None:
        if n:
            with self._lock:
                self.padding_boxes += n


def _call(backend: DetectorBackend, frame: FrameMeta, view: ViewTransform) -> list[Detection]:
    try:
        return backend.detect(frame, view)
    except Exception as exc:
        raise BackendError(getattr(backend, "name", type(backend).__name__), frame, exc) from exc


def _to_frame(d: Detection, view: ViewTransform, frame: FrameMeta) -> Detection:
    box = clip_to_frame(invert_transform(d.box, view), frame)
    return replace(d, box=box, frame_id=frame.frame_id, camera_id=frame.camera_id)


def run_plain_pass(backend: DetectorBackend, frame: FrameMeta) -> list[Detection]:
    """Result A: the backend on the untouched frame, clipped to it."""
    view = ViewTransform.identity(frame)
    return [_to_frame(d, view, frame) for d in _call(backend, frame, view)]


def run_enhanced_pass(
    backend: DetectorBackend,
    frame: FrameMeta,
    cfg: EnhancementConfig | None = None,
    diagnostics: PassDiagnostics | None = None,
) -> list[Detection]:
    """Result B: the backend on the enlarged crop, mapped back to frame coordinates."""
    cfg = cfg or EnhancementConfig()
    view = cfg.view(frame)
    raw = _call(backend, frame, view)
    if diagnostics is not None:
        cw, ch = view.content_width, view.content_height
        diagnostics.add_padding(sum(1 for d in raw if d.box.x2 > cw or d.box.y2 > ch))
    return [_to_frame(d, view, frame) for d in raw]


def filter_small(dets: Sequence[Detection], max_area: float = 96.0 * 96.0) -> list[Detection]:
    """Keep detections with area <= ``max_area`` (frame pixels)."""
    return [d for d in dets if area(d.box) <= max_area]


def _merge(
    result_a: Sequence[Detection], result_b: Sequence[Detection], cfg: EnhancementConfig
) -> tuple[list[Detection], list[str]]:
    pool = list(result_a) + filter_small(result_b, cfg.small_area_max)
    keep = class_aware_nms_indices(pool, cfg.nms)
    return [pool[i] for i in keep], ["A" if i < len(result_a) else "B" for i in keep]


def scale_enhanced_detect(
    backend: DetectorBackend,
    frame: FrameMeta,
    cfg: EnhancementConfig | None = None,
    diagnostics: PassDiagnostics | None = None,
) -> list[Detection]:
    cfg = cfg or EnhancementConfig()
    a = run_plain_pass(backend, frame)
    b = run_enhanced_pass(backend, frame, cfg, diagnostics)
    return _merge(a, b, cfg)[0]


def scale_enhanced_detect_traced(
    backend: DetectorBackend, frame: FrameMeta, cfg: EnhancementConfig | None = None
) -> tuple[list[Detection], list[str]]:
    """Like :func:`scale_enhanced_detect`, also returning "A"/"B" provenance per output box."""
    cfg = cfg or EnhancementConfig()
    return _merge(run_plain_pass(backend, frame), run_enhanced_pass(backend, frame, cfg), cfg)


def classwise_ensemble(
    per_backend: Mapping[str, Sequence[Detection]], cfg: EnsembleConfig | None = None
) -> list[Detection]:
    """Take each category's boxes from its configured source backend only."""
    cfg = cfg or EnsembleConfig()
    missing = [name for name in cfg.backends if name not in per_backend]
    if missing:
        raise KeyError(f"no detections supplied for backend(s) {missing}")
    out: list[Detection] = []
    for name in sorted(per_backend):
        out.extend(d for d in per_backend[name] if cfg.source[d.category] == name)
    return out


@dataclass(frozen=True)
class LatencyRow:
    frame_id: str
    camera_id: str
    stages_ms: dict[str, float]

    @property
    def total_ms(self) -> float:
        return sum(self.stages_ms.values())


@dataclass(frozen=True)
class LatencyReport:
    rows: list[LatencyRow]
    budget_ms: float = 70.0

    @property
    def n_frames(self) -> int:
        return len(self.rows)

    def _totals(self) -> np.ndarray:
        return np.array([r.total_ms for r in self.rows], dtype=np.float64)

    @property
    def mean_ms(self) -> float:
        return float(self._totals().mean()) if self.rows else 0.0

    def stage_mean_ms(self) -> dict[str, float]:
        if not self.rows:
            return {s: 0.0 for s in STAGES}
        return {s: float(np.mean([r.stages_ms.get(s, 0.0) for r in self.rows])) for s in STAGES}

    def percentiles(self) -> dict[str, float]:
        if not self.rows:
            return {"p50": 0.0, "p90": 0.0, "p99": 0.0}
        p50, p90, p99 = np.percentile(self._totals(), [50, 90, 99])
        return {"p50": float(p50), "p90": float(p90), "p99": float(p99)}

    @property
    def violations(self) -> int:
        return int(np.sum(self._totals() > self.budget_ms)) if self.rows else 0

    @property
    def within_budget(self) -> bool:
        return self.mean_ms <= self.budget_ms


def detect_frame(
    backends: Mapping[str, DetectorBackend],
    frame: FrameMeta,
    enhancement: EnhancementConfig | None = None,
    ensemble: EnsembleConfig | None = None,
    diagnostics: PassDiagnostics | None = None,
    clock: Callable[[], float] = time.perf_counter,
) -> tuple[list[Detection], LatencyRow]:
    """Full per-frame pipeline: two passes and a merge per backend, then the ensemble."""
    enhancement = enhancement or EnhancementConfig()
    ensemble = ensemble or EnsembleConfig()
    missing = [n for n in ensemble.backends if n not in backends]
    if missing:
        raise KeyError(f"backend(s) {missing} not registered")

    stages = dict.fromkeys(STAGES, 0.0)
    per_backend: dict[str, list[Detection]] = {}
    for name in ensemble.backends:
        backend = backends[name]
        t0 = clock()
        a = run_plain_pass(backend, frame)
        t1 = clock()
        b = run_enhanced_pass(backend, frame, enhancement, diagnostics)
        t2 = clock()
        per_backend[name] = _merge(a, b, enhancement)[0]
        t3 = clock()
        stages["plain"] += (t1 - t0) * 1e3
        stages["enhanced"] += (t2 - t1) * 1e3
        stages["merge"] += (t3 - t2) * 1e3
    t0 = clock()
    dets = classwise_ensemble(per_backend, ensemble)
    stages["ensemble"] = (clock() - t0) * 1e3
    return dets, LatencyRow(frame.frame_id, frame.camera_id, stages)


def run_frames(
    fn: Callable[[FrameMeta], object], frames: Sequence[FrameMeta], jobs: int = 1
) -> list:
    """Apply ``fn`` to every frame, optionally on a thread pool; results keep input order."""
    if jobs <= 1:
        return [fn(f) for f in frames]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, frames))


def detect_frames(
    backends: Mapping[str, DetectorBackend],
    frames: Sequence[FrameMeta],
    enhancement: EnhancementConfig | None = None,
    ensemble: EnsembleConfig | None = None,
    budget_ms: float = 70.0,
    jobs: int = 1,
) -> tuple[list[Detection], LatencyReport]:
    """Run :func:`detect_frame` over frames ordered by (frame_id, camera_id)."""
    ordered = sorted(frames, key=lambda f: f.key)
    results = run_frames(lambda f: detect_frame(backends, f, enhancement, ensemble), ordered, jobs)
    dets = [d for frame_dets, _ in results for d in frame_dets]
    return dets, LatencyReport([row for _, row in results], budget_ms)


class ReplayBackend:
    """Serves detections recorded earlier.

    ``plain`` holds frame-coordinate detections. For a non-identity view they
    are projected into the view and clipped to its content, unless
    ``enhanced`` supplies recorded view-coordinate output for that frame.
    Read-only after construction, so safe for concurrent use.
    """

    def __init__(
        self,
        plain: Sequence[Detection],
        enhanced: Sequence[Detection] | None = None,
        name: str = "replay",
    ):
        self.name = name
        self._plain: dict[tuple[str, str], list[Detection]] = {}
        for d in plain:
            self._plain.setdefault(d.key, []).append(d)
        self._enhanced: dict[tuple[str, str], list[Detection]] | None = None
        if enhanced is not None:
            self._enhanced = {}
            for d in enhanced:
                self._enhanced.setdefault(d.key, []).append(d)

    def detect(self, frame: FrameMeta, view: ViewTransform) -> list[Detection]:
        if view.is_identity:
            return list(self._plain.get(frame.key, []))
        if self._enhanced is not None:
            return list(self._enhanced.get(frame.key, []))
        out = []
        for d in self._plain.get(frame.key, []):
            box = clip_box(apply_transform(d.box, view), view.content_width, view.content_height)
            if box.width > 0 and box.height > 0:
                out.append(replace(d, box=box))
        return out


class SleepBackend:
    """Returns nothing after sleeping a fixed time; stands in for a model in latency tests."""

    def __init__(self, sleep_ms: float, name: str = "stub"):
        self.name = name
        self.sleep_ms = sleep_ms

    def detect(self, frame: FrameMeta, view: ViewTransform) -> list[Detection]:
        time.sleep(self.sleep_ms / 1e3)
        return []
