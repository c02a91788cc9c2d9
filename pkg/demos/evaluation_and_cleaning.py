"""
Evaluation levels and consensus cleaning
========================================

Level 1 ignores the hardest ground truth, level 2 counts everything. Boxes
that no model agrees with can be flagged before training.
"""

from __future__ import annotations

from rtdet import (
    BBox,
    CleanConfig,
    EvalConfig,
    GroundTruthBox,
    Level,
    SceneConfig,
    SyntheticBackend,
    SyntheticDetectorConfig,
    consensus_clean,
    evaluate,
    generate_dataset,
    run_plain_pass,
)

gts, frames = generate_dataset(SceneConfig(n_frames=40, seed=5))
models = []
for seed in (1, 2, 3):
    backend = SyntheticBackend(gts, SyntheticDetectorConfig(seed=seed))
    models.append([d for f in frames for d in run_plain_pass(backend, f)])

for level in (Level.L1, Level.L2):
    res = evaluate(models[0], gts, EvalConfig(level=level))
    print(level.name, {c.value: round(v, 4) for c, v in res.ap.items()}, "mean", round(res.mean_ap, 4))

# plant a spurious label that no model will confirm
f = frames[0]
bogus = GroundTruthBox(BBox(5, 5, 45, 45), gts[0].category, 1, "bogus", f.frame_id, f.camera_id)
result = consensus_clean(gts + [bogus], models, CleanConfig(min_models=2, iou_min=0.5, score_min=0.1))
print("kept", len(result.kept), "removed", len(result.removed))
print("bogus removed:", any(g.id == "bogus" for g in result.removed))
