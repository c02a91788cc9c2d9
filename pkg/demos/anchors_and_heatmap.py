"""
Anchors and where small objects live
====================================

Cluster ground-truth box sizes into anchors, once over all boxes and once
over the small ones, then histogram the centers of small boxes to see the
band the enhancement crop targets.
"""

from __future__ import annotations

import numpy as np

from rtdet import SceneConfig, center_heatmap, generate_dataset, kmeans_anchors, small_subset

gts, frames = generate_dataset(SceneConfig(n_frames=80, seed=11))
sizes = [(g.box.width, g.box.height) for g in gts]

full = kmeans_anchors(sizes, k=12, seed=0)
print("all boxes: mean 1-IoU %.4f after %d steps" % (full.mean_distance, full.iterations))
print(np.round(np.array(full.anchors), 1))

small = small_subset(sizes, area_max=4096.0)
tiny = kmeans_anchors(small, k=6, seed=0)
print("small boxes (%d): mean 1-IoU %.4f" % (len(small), tiny.mean_distance))
print(np.round(np.array(tiny.anchors), 1))

# rows are image height in sixteenths, top to bottom
grid = center_heatmap(gts, {f.key: f for f in frames}, grid_w=8, grid_h=16)
rows = grid.counts.sum(axis=1)
for i, n in enumerate(rows):
    print(f"{i / 16:4.2f}-{(i + 1) / 16:4.2f} {'#' * int(60 * n / rows.max())}")
share = rows[5:13].sum() / grid.total
print(f"share of small centers in 0.31-0.81: {share:.2f}")
