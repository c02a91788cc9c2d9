"""Brute-force reference implementations used only by the tests.

Each one is written for clarity over speed and shares nothing with the
production code path beyond the scalar ``iou``/``area`` definitions.
"""

from __future__ import annotations

import itertools
import math

from rtdet.geometry import CATEGORIES, iou


def nms_oracle(dets, thresh):
    """O(n^2) greedy NMS that rescans the full remaining list on every emission."""
    remaining = list(range(len(dets)))
    kept = []
    while remaining:
        best = remaining[0]
        for j in remaining:
            if dets[j].score > dets[best].score:
                best = j
        kept.append(best)
        remaining = [j for j in remaining if j != best and iou(dets[best].box, dets[j].box) < thresh]
    return kept


def class_aware_nms_oracle(dets, thresholds):
    kept = []
    for cat in CATEGORIES:
        idx = [i for i, d in enumerate(dets) if d.category is cat]
        sub = [dets[i] for i in idx]
        kept += [idx[k] for k in nms_oracle(sub, thresholds[cat])]
    return sorted(kept, key=lambda i: (-dets[i].score, i))


def _greedy_consistent(dets, gts, assign, thresholds):
    """Does ``assign`` (det index -> gt index or None) satisfy the greedy rule?"""
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    used = set()
    for i in order:
        cands = [
            (iou(dets[i].box, g.box), -j)
            for j, g in enumerate(gts)
            if j not in used and g.category is dets[i].category and iou(dets[i].box, g.box) >= thresholds[g.category]
        ]
        want = None if not cands else -max(cands)[1]
        if assign[i] != want:
            return False
        if want is not None:
            used.add(want)
    return True


def exhaustive_match(dets, gts, thresholds):
    """Enumerate every partial injective matching; return the unique greedy-consistent one."""
    options = []
    for d in dets:
        opts = [None] + [
            j for j, g in enumerate(gts) if g.category is d.category and iou(d.box, g.box) >= thresholds[g.category]
        ]
        options.append(opts)
    found = []
    for assign in itertools.product(*options):
        used = [a for a in assign if a is not None]
        if len(used) != len(set(used)):
            continue
        if _greedy_consistent(dets, gts, assign, thresholds):
            found.append(assign)
    assert len(found) == 1, f"expected exactly one greedy matching, found {len(found)}"
    return found[0]


def ap_oracle(dets, gts, thresholds, level):
    """Per-category AP from the exhaustive matcher and an explicit threshold sweep."""
    by_frame = {}
    for d in dets:
        by_frame.setdefault(d.key, ([], []))[0].append(d)
    for g in gts:
        by_frame.setdefault(g.key, ([], []))[1].append(g)

    scored = {c: [] for c in CATEGORIES}  # (score, is_tp)
    positives = {c: 0 for c in CATEGORIES}
    for fd, fg in by_frame.values():
        assign = exhaustive_match(fd, fg, thresholds)
        for d, a in zip(fd, assign):
            if a is None:
                scored[d.category].append((d.score, False))
            elif level == 2 or fg[a].difficulty == 1:
                scored[d.category].append((d.score, True))
            # else: ignored
        for g in fg:
            if level == 2 or g.difficulty == 1:
                positives[g.category] += 1

    out = {}
    for c in CATEGORIES:
        items = scored[c]
        if positives[c] == 0:
            out[c] = math.nan if not items else 0.0
            continue
        pts = []
        for t in sorted({s for s, _ in items}, reverse=True):
            sel = [tp for s, tp in items if s >= t]
            pts.append((sum(sel) / positives[c], sum(sel) / len(sel)))
        total, prev_r = 0.0, 0.0
        for k, (r, _) in enumerate(pts):
            total += (r - prev_r) * max(p for _, p in pts[k:])
            prev_r = r
        out[c] = total
    return out


def best_partition(points, k, distance):
    """Exhaustive k-partition minimising mean distance to the cluster mean."""
    n = len(points)
    best = (math.inf, None)
    for labels in itertools.product(range(k), repeat=n):
        if len(set(labels)) != k or labels[0] != 0:
            continue
        cents = []
        for c in range(k):
            members = [points[i] for i in range(n) if labels[i] == c]
            cents.append((sum(m[0] for m in members) / len(members), sum(m[1] for m in members) / len(members)))
        cost = sum(distance(points[i], cents[labels[i]]) for i in range(n)) / n
        if cost < best[0]:
            best = (cost, sorted(cents, key=lambda wh: (wh[0] * wh[1], wh[0])))
    return best
