from __future__ import annotations

import numpy as np
import pytest

from rtdet.evaluation import GroundTruthBox
from rtdet.geometry import BBox, Category, Detection, FrameMeta

V, P, C = Category.VEHICLE, Category.PEDESTRIAN, Category.CYCLIST
FRAME = FrameMeta("f0", "front", 1920, 1280)
SIDE = FrameMeta("f0", "side_left", 1920, 886)


def det(x1, y1, x2, y2, cat=V, score=0.9, frame_id="f0", camera_id="front"):
    return Detection(BBox(x1, y1, x2, y2), cat, score, frame_id, camera_id)


def gt(x1, y1, x2, y2, cat=V, difficulty=1, id="g0", frame_id="f0", camera_id="front"):
    return GroundTruthBox(BBox(x1, y1, x2, y2), cat, difficulty, id, frame_id, camera_id)


def random_dets(rng: np.random.Generator, n: int, extent: float = 400.0, frame_id="f0"):
    cats = list(Category)
    out = []
    for _ in range(n):
        x, y = rng.uniform(0, extent, 2)
        w, h = rng.uniform(5, 80, 2)
        out.append(det(x, y, x + w, y + h, cats[rng.integers(3)], float(rng.uniform()), frame_id))
    return out


_acceptance: list[tuple[str, str, str]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(id, title): exit criterion of the build")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        _acceptance.append((mark.args[0], mark.args[1], "PASS" if rep.passed else "FAIL"))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for cid, title, status in sorted(_acceptance):
        terminalreporter.write_line(f"{status}  {cid}  {title}")
