"""Run configuration: one YAML (or JSON) document holding every tunable constant."""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from rtdet.cleaning import CleanConfig
from rtdet.evaluation import DEFAULT_EVAL_IOU, EvalConfig, Level
from rtdet.geometry import CATEGORIES, Category
from rtdet.pipeline import DEFAULT_SOURCES, EnhancementConfig, EnsembleConfig
from rtdet.simulate import SceneConfig, SyntheticDetectorConfig
from rtdet.suppression import DEFAULT_NMS_IOU, NmsConfig

SEED_ENV = "RTDET_SEED"
BACKEND_KINDS = ("replay", "synthetic", "stub")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class BackendSpec:
    name: str
    kind: str
    path: str | None = None  # replay: plain-pass detections
    enhanced_path: str | None = None  # replay: recorded enhanced-view detections
    gt: str | None = None  # synthetic: ground truth to simulate from
    sleep_ms: float = 0.0  # stub
    detector: SyntheticDetectorConfig | None = None  # synthetic


@dataclass(frozen=True)
class RunConfig:
    seed: int = 42
    budget_ms: float = 70.0
    enhancement: EnhancementConfig = field(default_factory=EnhancementConfig)
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    clean: CleanConfig = field(default_factory=CleanConfig)
    scene: SceneConfig = field(default_factory=SceneConfig)
    detector: SyntheticDetectorConfig = field(default_factory=SyntheticDetectorConfig)
    backends: dict[str, BackendSpec] = field(default_factory=dict)

    @property
    def nms(self) -> NmsConfig:
        return self.enhancement.nms


def default_config_dict() -> dict[str, Any]:
    scene = SceneConfig()
    det = SyntheticDetectorConfig()
    return {
        "seed": 42,
        "budget_ms": 70.0,
        "enhancement": {"crop": [0.0, 0.3, 1.0, 0.8], "scale": 1.5, "stride": 64, "small_area_max": 9216.0},
        "nms": {**{c.value: DEFAULT_NMS_IOU[c] for c in CATEGORIES}, "min_score": 0.0},
        "ensemble": {c.value: DEFAULT_SOURCES[c] for c in CATEGORIES},
        "eval": {"iou": {c.value: DEFAULT_EVAL_IOU[c] for c in CATEGORIES}, "level": "L2"},
        "clean": asdict(CleanConfig()),
        "scene": {
            "n_frames": scene.n_frames,
            "cameras": [list(c) for c in scene.cameras],
            "objects_per_frame": {c.value: v for c, v in scene.objects_per_frame.items()},
            "aspect": {c.value: v for c, v in scene.aspect.items()},
            "aspect_jitter": scene.aspect_jitter,
            "min_side": scene.min_side,
            "max_side": scene.max_side,
            "small_area_max": scene.small_area_max,
            "band": list(scene.band),
            "band_prob": scene.band_prob,
            "hard_area_max": scene.hard_area_max,
        },
        "detector": {f.name: _plain(getattr(det, f.name)) for f in fields(det) if f.name != "seed"},
        "backends": {
            "w6": {"kind": "synthetic", "seed": 6},
            "p6": {"kind": "synthetic", "seed": 7},
        },
    }


def _plain(v: Any) -> Any:
    return list(v) if isinstance(v, tuple) else v


def print_default_config() -> str:
    return yaml.safe_dump(default_config_dict(), sort_keys=False)


class _Locator:
    """Maps key paths in the source document to line numbers."""

    def __init__(self, text: str | None, source: str):
        self.source = source
        self.root = yaml.compose(text) if text else None

    def line(self, path: tuple) -> int | None:
        node, found = self.root, None
        for key in path:
            if not isinstance(node, yaml.MappingNode):
                break
            for k, v in node.value:
                if k.value == str(key):
                    found, node = k.start_mark.line + 1, v
                    break
            else:
                break
        return found

    def error(self, path: tuple, msg: str) -> ConfigError:
        line = self.line(path)
        where = f"{self.source}:{line}" if line else self.source
        dotted = ".".join(map(str, path))
        return ConfigError(f"{where}: {dotted}: {msg}" if dotted else f"{where}: {msg}")


def _cat_map(raw: Any, loc: _Locator, path: tuple, cast) -> dict[Category, Any]:
    if not isinstance(raw, dict):
        raise loc.error(path, "expected a mapping of category -> value")
    out = {}
    for k, v in raw.items():
        try:
            out[Category.parse(str(k))] = cast(v)
        except (TypeError, ValueError) as exc:
            raise loc.error(path + (k,), str(exc)) from None
    return out


def _section(data: dict, name: str, loc: _Locator, allowed: set[str]) -> dict:
    sec = data.get(name, {}) or {}
    if not isinstance(sec, dict):
        raise loc.error((name,), "expected a mapping")
    for k in sec:
        if k not in allowed:
            raise loc.error((name, k), f"unknown key (allowed: {', '.join(sorted(allowed))})")
    return sec


def _build(loc: _Locator, path: tuple, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except (TypeError, ValueError) as exc:
        raise loc.error(path, str(exc)) from None


def parse_config(data: dict | None, source: str = "<config>", text: str | None = None, base_dir: Path | None = None) -> RunConfig:
    """Validate a config mapping; errors name the offending key and its line."""
    loc = _Locator(text, source)
    data = data or {}
    if not isinstance(data, dict):
        raise loc.error((), "top level must be a mapping")
    top = {"seed", "budget_ms", "enhancement", "nms", "ensemble", "eval", "clean", "scene", "detector", "backends"}
    for k in data:
        if k not in top:
            raise loc.error((k,), f"unknown key (allowed: {', '.join(sorted(top))})")

    seed = _build(loc, ("seed",), int, data.get("seed", 42))
    budget = _build(loc, ("budget_ms",), float, data.get("budget_ms", 70.0))
    if budget <= 0:
        raise loc.error(("budget_ms",), "must be positive")

    nms_raw = _section(data, "nms", loc, {c.value for c in CATEGORIES} | {"min_score"})
    thresholds = dict(DEFAULT_NMS_IOU)
    thresholds.update(_cat_map({k: v for k, v in nms_raw.items() if k != "min_score"}, loc, ("nms",), float))
    nms = _build(loc, ("nms",), NmsConfig, thresholds, float(nms_raw.get("min_score", 0.0)))

    enh_raw = _section(data, "enhancement", loc, {"crop", "scale", "stride", "small_area_max"})
    enh_kw: dict[str, Any] = {}
    if "crop" in enh_raw:
        crop = enh_raw["crop"]
        if not isinstance(crop, list) or len(crop) != 4:
            raise loc.error(("enhancement", "crop"), "expected [x_lo, y_lo, x_hi, y_hi]")
        enh_kw["crop"] = tuple(_build(loc, ("enhancement", "crop"), float, v) for v in crop)
    for key, cast in (("scale", float), ("stride", int), ("small_area_max", float)):
        if key in enh_raw:
            enh_kw[key] = _build(loc, ("enhancement", key), cast, enh_raw[key])
    enhancement = _build(loc, ("enhancement",), EnhancementConfig, nms=nms, **enh_kw)

    ens_raw = _section(data, "ensemble", loc, {c.value for c in CATEGORIES})
    sources = dict(DEFAULT_SOURCES)
    sources.update(_cat_map(ens_raw, loc, ("ensemble",), str))
    ensemble = EnsembleConfig(sources)

    ev_raw = _section(data, "eval", loc, {"iou", "level"})
    ious = dict(DEFAULT_EVAL_IOU)
    if "iou" in ev_raw:
        ious.update(_cat_map(ev_raw["iou"], loc, ("eval", "iou"), float))
    try:
        level = Level.parse(ev_raw.get("level", "L2"))
    except (KeyError, ValueError):
        raise loc.error(("eval", "level"), "must be L1 or L2") from None
    evalc = _build(loc, ("eval",), EvalConfig, ious, level)

    cl_raw = _section(data, "clean", loc, {"min_models", "iou_min", "score_min"})
    clean = _build(loc, ("clean",), CleanConfig, **cl_raw)

    sc_raw = _section(data, "scene", loc, {f.name for f in fields(SceneConfig)})
    sc_kw = dict(sc_raw)
    for key in ("objects_per_frame", "aspect"):
        if key in sc_kw:
            sc_kw[key] = _cat_map(sc_kw[key], loc, ("scene", key), float)
    if "cameras" in sc_kw:
        cams = sc_kw["cameras"]
        if not isinstance(cams, list) or not all(isinstance(c, list) and len(c) == 3 for c in cams):
            raise loc.error(("scene", "cameras"), "expected a list of [camera_id, width, height]")
        sc_kw["cameras"] = tuple((str(c), int(w), int(h)) for c, w, h in cams)
    if "band" in sc_kw:
        sc_kw["band"] = tuple(sc_kw["band"])
    sc_kw.setdefault("seed", seed)
    scene = _build(loc, ("scene",), SceneConfig, **sc_kw)

    det_fields = {f.name for f in fields(SyntheticDetectorConfig)}
    det_raw = _section(data, "detector", loc, det_fields)
    detector = _build(loc, ("detector",), _detector, {}, det_raw, seed)

    backends_raw = data.get("backends", default_config_dict()["backends"]) or {}
    if not isinstance(backends_raw, dict):
        raise loc.error(("backends",), "expected a mapping of name -> backend spec")
    backends = {}
    for name, spec in backends_raw.items():
        backends[name] = _backend(str(name), spec, loc, detector, base_dir)

    return RunConfig(seed, budget, enhancement, ensemble, evalc, clean, scene, detector, backends)


def _detector(base: dict, overrides: dict, seed: int) -> SyntheticDetectorConfig:
    kw = {**base, **overrides}
    kw.setdefault("seed", seed)
    if "fp_side" in kw:
        kw["fp_side"] = tuple(kw["fp_side"])
    return SyntheticDetectorConfig(**kw)


def _backend(name: str, spec: Any, loc: _Locator, detector: SyntheticDetectorConfig, base_dir: Path | None) -> BackendSpec:
    path = ("backends", name)
    if not isinstance(spec, dict):
        raise loc.error(path, "expected a mapping")
    kind = spec.get("kind")
    if kind not in BACKEND_KINDS:
        raise loc.error(path + ("kind",), f"kind must be one of {BACKEND_KINDS}, got {kind!r}")

    def resolve(key: str, required: bool) -> str | None:
        val = spec.get(key)
        if val is None:
            if required:
                raise loc.error(path, f"{kind} backend needs '{key}'")
            return None
        p = Path(val)
        if base_dir is not None and not p.is_absolute():
            p = base_dir / p
        if not p.exists():
            raise loc.error(path + (key,), f"file not found: {p}")
        return str(p)

    if kind == "replay":
        _only(spec, {"kind", "path", "enhanced_path"}, loc, path)
        return BackendSpec(name, kind, path=resolve("path", True), enhanced_path=resolve("enhanced_path", False))
    if kind == "stub":
        _only(spec, {"kind", "sleep_ms"}, loc, path)
        ms = _build(loc, path + ("sleep_ms",), float, spec.get("sleep_ms", 0.0))
        if ms < 0:
            raise loc.error(path + ("sleep_ms",), "must be >= 0")
        return BackendSpec(name, kind, sleep_ms=ms)
    det_fields = {f.name for f in fields(SyntheticDetectorConfig)}
    _only(spec, {"kind", "gt"} | det_fields, loc, path)
    overrides = {k: v for k, v in spec.items() if k in det_fields}
    base = {f.name: getattr(detector, f.name) for f in fields(detector)}
    det = _build(loc, path, _detector, base, overrides, detector.seed)
    return BackendSpec(name, kind, gt=resolve("gt", False), detector=det)


def _only(spec: dict, allowed: set[str], loc: _Locator, path: tuple) -> None:
    for k in spec:
        if k not in allowed:
            raise loc.error(path + (k,), f"unknown key for {spec.get('kind')} backend")


def load_config(path: str | Path | None = None, seed: int | None = None) -> RunConfig:
    """Load a config file (or the defaults).

    Seed precedence: ``seed`` argument, then ``$RTDET_SEED``, then the file.
    """
    if path is None:
        data, text, source, base = {}, None, "<defaults>", None
    else:
        text = Path(path).read_text(encoding="utf-8")
        source, base = str(path), Path(path).parent
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f"{path}:{mark.line + 1}" if mark else str(path)
            raise ConfigError(f"{where}: {getattr(exc, 'problem', exc)}") from None
    if seed is None and os.environ.get(SEED_ENV):
        try:
            seed = int(os.environ[SEED_ENV])
        except ValueError:
            raise ConfigError(f"${SEED_ENV} must be an integer, got {os.environ[SEED_ENV]!r}") from None
    if seed is not None:
        data = {**data, "seed": seed}
        scene = data.get("scene")
        if isinstance(scene, dict) and "seed" in scene:
            data["scene"] = {**scene, "seed": seed}
    return parse_config(data, source, text, base)
