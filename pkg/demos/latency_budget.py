"""
Latency against a per-frame budget
==================================

A stub backend that sleeps stands in for a model. Two passes per frame at
30 ms fit a 70 ms budget; at 45 ms every frame is over.
"""

from __future__ import annotations

from rtdet import EnsembleConfig, EnhancementConfig, FrameMeta, SleepBackend, detect_frames

frames = [FrameMeta(f"{i:03d}", "front", 1920, 1280) for i in range(8)]
route = EnsembleConfig({c: "stub" for c in EnsembleConfig().source})

for sleep_ms in (30.0, 45.0):
    backends = {"stub": SleepBackend(sleep_ms, name="stub")}
    _, report = detect_frames(backends, frames, EnhancementConfig(), route, budget_ms=70.0)
    pct = report.percentiles()
    print(
        f"sleep {sleep_ms:.0f} ms: mean {report.mean_ms:.1f} ms, p90 {pct['p90']:.1f} ms, "
        f"violations {report.violations}/{len(frames)}, within budget {report.within_budget}"
    )
