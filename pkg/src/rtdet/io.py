"""JSON Lines readers and writers for detections, ground truth and frame indexes.

Detection record: ``{"frame_id", "camera_id", "category", "score", "box": [x1, y1, x2, y2]}``.
Ground truth adds ``"id"`` and ``"difficulty"`` and drops ``"score"``.
Frame record: ``{"frame_id", "camera_id", "width", "height"}``.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Callable, Iterable, Iterator, Sequence, TypeVar

from rtdet.evaluation import GroundTruthBox
from rtdet.geometry import BBox, Category, Detection, FrameMeta

T = TypeVar("T")


class FormatError(ValueError):
    def __init__(self, path: str | Path, line: int, msg: str):
        super().__init__(f"{path}:{line}: {msg}")
        self.path = str(path)
        self.line = line


def _box(rec: dict) -> BBox:
    box = rec["box"]
    if not isinstance(box, list) or len(box) != 4:
        raise ValueError("'box' must be a list of 4 numbers")
    return BBox(*(float(v) for v in box))


def detection_from_dict(rec: dict) -> Detection:
    return Detection(
        _box(rec), Category.parse(rec["category"]), float(rec["score"]), str(rec["frame_id"]), str(rec["camera_id"])
    )


def gt_from_dict(rec: dict) -> GroundTruthBox:
    return GroundTruthBox(
        _box(rec),
        Category.parse(rec["category"]),
        int(rec["difficulty"]),
        str(rec["id"]),
        str(rec["frame_id"]),
        str(rec["camera_id"]),
    )


def frame_from_dict(rec: dict) -> FrameMeta:
    return FrameMeta(str(rec["frame_id"]), str(rec["camera_id"]), int(rec["width"]), int(rec["height"]))


def _box_list(box: BBox, round_px: bool) -> list:
    coords = box.as_tuple()
    return [round(c) for c in coords] if round_px else list(coords)


def detection_to_dict(d: Detection, round_px: bool = False) -> dict:
    return {
        "frame_id": d.frame_id,
        "camera_id": d.camera_id,
        "category": d.category.value,
        "score": d.score,
        "box": _box_list(d.box, round_px),
    }


def gt_to_dict(g: GroundTruthBox, round_px: bool = False) -> dict:
    return {
        "frame_id": g.frame_id,
        "camera_id": g.camera_id,
        "id": g.id,
        "category": g.category.value,
        "difficulty": g.difficulty,
        "box": _box_list(g.box, round_px),
    }


def frame_to_dict(f: FrameMeta) -> dict:
    return {"frame_id": f.frame_id, "camera_id": f.camera_id, "width": f.width, "height": f.height}


def iter_jsonl(path: str | Path, parse: Callable[[dict], T]) -> Iterator[T]:
    """Yield parsed records, raising :class:`FormatError` with the 1-based line number."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                if not isinstance(rec, dict):
                    raise ValueError("record is not a JSON object")
                yield parse(rec)
            except KeyError as exc:
                raise FormatError(path, lineno, f"missing field {exc}") from None
            except (ValueError, TypeError) as exc:
                raise FormatError(path, lineno, str(exc)) from None


def read_detections(path: str | Path) -> list[Detection]:
    return list(iter_jsonl(path, detection_from_dict))


def read_gt(path: str | Path) -> list[GroundTruthBox]:
    gts = list(iter_jsonl(path, gt_from_dict))
    seen: set[tuple[str, str, str]] = set()
    for g in gts:
        k = (g.frame_id, g.camera_id, g.id)
        if k in seen:
            raise ValueError(f"{path}: duplicate gt id {g.id!r} in frame {g.frame_id}/{g.camera_id}")
        seen.add(k)
    return gts


def read_frames(path: str | Path) -> list[FrameMeta]:
    return list(iter_jsonl(path, frame_from_dict))


def write_jsonl(path: str | Path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def write_detections(path: str | Path, dets: Sequence[Detection], round_px: bool = False) -> None:
    write_jsonl(path, (detection_to_dict(d, round_px) for d in dets))


def write_gt(path: str | Path, gts: Sequence[GroundTruthBox], round_px: bool = False) -> None:
    write_jsonl(path, (gt_to_dict(g, round_px) for g in gts))


def write_frames(path: str | Path, frames: Sequence[FrameMeta]) -> None:
    write_jsonl(path, (frame_to_dict(f) for f in frames))
