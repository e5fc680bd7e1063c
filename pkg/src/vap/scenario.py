"""Synthetic labelled video: scenes, textured moving objects, lighting and view changes.

A scenario is a JSON document (see README for the schema). Rendering is a
pure function of the document: backgrounds and object textures are drawn
from generators keyed on scene and category names, per-frame noise on
(seed, frame index).

Man-made categories are drawn as rectangles with rectilinear stripe
textures, natural ones as ellipses with smooth blob textures; every
category gets its own base colour.
"""
from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np
from scipy import ndimage

from .context import ContextState, tally
from .core import BoundingBox, CategoryCatalog, Frame, Kind, SceneCatalog


class ScenarioError(ValueError):
    pass


def _key(*parts) -> int:
    return zlib.crc32("/".join(str(p) for p in parts).encode("utf-8"))


@dataclass(frozen=True)
class ViewBlend:
    """Appearance drift of one category under one view-tag.

    The object's texture is mixed with ``toward``'s texture by a weight that
    ramps linearly from ``start`` to ``end`` over the object's lifetime.
    """

    toward: str
    start: float
    end: float


@dataclass(frozen=True)
class Injections:
    pairs: tuple[tuple[str, str], ...] = ()
    ambiguity: float = 0.5
    noise: float = 0.0
    view_ambiguity: tuple[tuple[str, float], ...] = ()
    view_blend: tuple[tuple[str, str, ViewBlend], ...] = ()  # (view, category, blend)

    def blend_for(self, view: str, category: str) -> Optional[ViewBlend]:
        for v, c, b in self.view_blend:
            if v == view and c == category:
                return b
        return None


@dataclass(frozen=True)
class ObjectTrack:
    object_id: str
    category: str
    waypoints: tuple[tuple[int, float, float], ...]  # (frame, cx, cy), frames increasing
    size: tuple[int, int] = (20, 14)
    view: str = "ground"
    occlusions: tuple[tuple[int, int, float], ...] = ()  # [start, end) windows with visibility

    @property
    def first_frame(self) -> int:
        return self.waypoints[0][0]

    @property
    def last_frame(self) -> int:
        return self.waypoints[-1][0]

    def center(self, t: int) -> Optional[tuple[float, float]]:
        """Linearly interpolated centre, ``None`` outside the waypoint span."""
        if t < self.first_frame or t > self.last_frame:
            return None
        frames = [w[0] for w in self.waypoints]
        if len(frames) == 1:
            return self.waypoints[0][1], self.waypoints[0][2]
        cx = float(np.interp(t, frames, [w[1] for w in self.waypoints]))
        cy = float(np.interp(t, frames, [w[2] for w in self.waypoints]))
        return cx, cy

    def visibility(self, t: int) -> float:
        for start, end, vis in self.occlusions:
            if start <= t < end:
                return vis
        return 1.0

    def progress(self, t: int) -> float:
        span = self.last_frame - self.first_frame
        return 0.0 if span == 0 else (t - self.first_frame) / span


@dataclass(frozen=True)
class ScenarioSpec:
    name: str = "scenario"
    width: int = 160
    height: int = 120
    frames: int = 100
    fps: float = 25.0
    seed: int = 0
    noise: float = 0.01
    scenes: tuple[str, ...] = ("street",)
    scene_schedule: tuple[tuple[int, str], ...] = ((0, "street"),)
    lighting: tuple[tuple[int, int, float], ...] = ()
    objects: tuple[ObjectTrack, ...] = ()
    injections: Injections = field(default_factory=Injections)

    def scene_at(self, t: int) -> str:
        current = self.scene_schedule[0][1]
        for start, scene in self.scene_schedule:
            if start <= t:
                current = scene
        return current

    def gain_at(self, t: int) -> float:
        for start, end, gain in self.lighting:
            if start <= t < end:
                return gain
        return 1.0


@dataclass(frozen=True)
class ObjectTruth:
    object_id: str
    category: str
    box: BoundingBox
    view: str
    visibility: float


@dataclass(frozen=True)
class FrameTruth:
    index: int
    scene: str
    objects: tuple[ObjectTruth, ...]


# ---------------------------------------------------------------- parsing

_TOP_KEYS = {"name", "width", "height", "frames", "fps", "seed", "noise", "scenes",
             "scene_schedule", "lighting", "objects", "injections"}
_OBJECT_KEYS = {"id", "category", "waypoints", "size", "view", "occlusions"}
_INJECTION_KEYS = {"pairs", "ambiguity", "noise", "view_ambiguity", "view_blend"}


def _reject_unknown(d: dict, allowed: set, where: str) -> None:
    for k in d:
        if k not in allowed:
            raise ScenarioError(f"unknown key {where}{k!r}")


def parse_scenario(d: dict, catalog: Optional[CategoryCatalog] = None) -> ScenarioSpec:
    """Validate a scenario document and build the spec."""
    catalog = catalog or CategoryCatalog.default()
    if not isinstance(d, dict):
        raise ScenarioError("scenario must be a JSON object")
    _reject_unknown(d, _TOP_KEYS, "")
    width, height = int(d.get("width", 160)), int(d.get("height", 120))
    if width < 32 or height < 32:
        raise ScenarioError("width and height must be at least 32")
    frames = int(d.get("frames", 100))
    if frames < 0:
        raise ScenarioError("frames must be non-negative")
    scenes = tuple(d.get("scenes", ["street"]))
    if not scenes or len(set(scenes)) != len(scenes):
        raise ScenarioError("scenes must be a non-empty list of unique names")
    schedule = tuple((int(s), str(n)) for s, n in d.get("scene_schedule", [[0, scenes[0]]]))
    if not schedule or schedule[0][0] != 0:
        raise ScenarioError("scene_schedule must start at frame 0")
    for _, n in schedule:
        if n not in scenes:
            raise ScenarioError(f"scene_schedule names unknown scene {n!r}")
    lighting = tuple((int(a), int(b), float(g)) for a, b, g in d.get("lighting", []))
    for a, b, g in lighting:
        if not (b > a and g >= 0):
            raise ScenarioError(f"bad lighting segment {[a, b, g]}")

    objects = []
    for i, o in enumerate(d.get("objects", [])):
        _reject_unknown(o, _OBJECT_KEYS, f"objects[{i}].")
        cat = o.get("category")
        if cat not in catalog.names:
            raise ScenarioError(f"objects[{i}]: unknown category {cat!r}")
        wps = tuple((int(f), float(x), float(y)) for f, x, y in o.get("waypoints", []))
        if not wps:
            raise ScenarioError(f"objects[{i}]: at least one waypoint is required")
        if any(b[0] <= a[0] for a, b in zip(wps, wps[1:])):
            raise ScenarioError(f"objects[{i}]: waypoint frames must increase")
        for _, x, y in wps:
            if not (0 <= x <= width and 0 <= y <= height):
                raise ScenarioError(f"objects[{i}]: waypoint ({x}, {y}) lies outside the frame")
        size = tuple(int(v) for v in o.get("size", (20, 14)))
        if len(size) != 2 or min(size) < 2:
            raise ScenarioError(f"objects[{i}]: size must be [w, h] with both >= 2")
        occ = tuple((int(a), int(b), float(v)) for a, b, v in o.get("occlusions", []))
        for a, b, v in occ:
            if not (b > a and 0.0 <= v <= 1.0):
                raise ScenarioError(f"objects[{i}]: bad occlusion window {[a, b, v]}")
        objects.append(ObjectTrack(str(o.get("id", f"obj{i}")), cat, wps, size,
                                   str(o.get("view", "ground")), occ))

    inj = d.get("injections", {})
    _reject_unknown(inj, _INJECTION_KEYS, "injections.")
    pairs = tuple((a, b) for a, b in inj.get("pairs", []))
    for a, b in pairs:
        for n in (a, b):
            if n not in catalog.names:
                raise ScenarioError(f"injections.pairs: unknown category {n!r}")
    blends = []
    for view, per_cat in inj.get("view_blend", {}).items():
        for cat, b in per_cat.items():
            if cat not in catalog.names or b.get("toward") not in catalog.names:
                raise ScenarioError(f"injections.view_blend.{view}.{cat}: unknown category")
            lo, hi = b.get("range", [0.0, 0.0])
            blends.append((view, cat, ViewBlend(b["toward"], float(lo), float(hi))))
    injections = Injections(
        pairs=pairs,
        ambiguity=float(inj.get("ambiguity", 0.5)),
        noise=float(inj.get("noise", 0.0)),
        view_ambiguity=tuple(sorted((str(k), float(v)) for k, v in inj.get("view_ambiguity", {}).items())),
        view_blend=tuple(blends),
    )
    return ScenarioSpec(
        name=str(d.get("name", "scenario")), width=width, height=height, frames=frames,
        fps=float(d.get("fps", 25.0)), seed=int(d.get("seed", 0)), noise=float(d.get("noise", 0.01)),
        scenes=scenes, scene_schedule=schedule, lighting=lighting, objects=tuple(objects),
        injections=injections,
    )


def scenario_to_dict(spec: ScenarioSpec) -> dict:
    inj = spec.injections
    blend: dict = {}
    for view, cat, b in inj.view_blend:
        blend.setdefault(view, {})[cat] = {"toward": b.toward, "range": [b.start, b.end]}
    return {
        "name": spec.name, "width": spec.width, "height": spec.height, "frames": spec.frames,
        "fps": spec.fps, "seed": spec.seed, "noise": spec.noise, "scenes": list(spec.scenes),
        "scene_schedule": [list(s) for s in spec.scene_schedule],
        "lighting": [list(s) for s in spec.lighting],
        "objects": [
            {"id": o.object_id, "category": o.category, "waypoints": [list(w) for w in o.waypoints],
             "size": list(o.size), "view": o.view, "occlusions": [list(w) for w in o.occlusions]}
            for o in spec.objects
        ],
        "injections": {
            "pairs": [list(p) for p in inj.pairs], "ambiguity": inj.ambiguity, "noise": inj.noise,
            "view_ambiguity": dict(inj.view_ambiguity), "view_blend": blend,
        },
    }


def load_scenarios(path, catalog: Optional[CategoryCatalog] = None) -> list[ScenarioSpec]:
    """Read one scenario, or a suite ``{"scenarios": [...]}``, from a JSON file."""
    with open(path) as fh:
        d = json.load(fh)
    if isinstance(d, dict) and "scenarios" in d:
        _reject_unknown(d, {"name", "scenarios"}, "")
        return [parse_scenario(s, catalog) for s in d["scenarios"]]
    return [parse_scenario(d, catalog)]


def save_scenarios(path, specs: Sequence[ScenarioSpec], name: str = "suite") -> None:
    with open(path, "w") as fh:
        json.dump({"name": name, "scenarios": [scenario_to_dict(s) for s in specs]}, fh, indent=1)


# -------------------------------------------------------------- rendering

@lru_cache(maxsize=64)
def scene_background(scene: str, width: int, height: int) -> np.ndarray:
    """Static per-scene backdrop: a vertical colour gradient plus faint texture."""
    rng = np.random.default_rng(_key("scene", scene))
    top, bottom = rng.uniform(0.15, 0.55, 3), rng.uniform(0.15, 0.55, 3)
    t = np.linspace(0.0, 1.0, height)[:, None, None]
    bg = np.broadcast_to((1 - t) * top + t * bottom, (height, width, 3)).copy()
    grain = ndimage.gaussian_filter(rng.normal(0.0, 1.0, (height, width)), 3.0)
    bg += 0.03 * grain[:, :, None] / (grain.std() + 1e-12)
    bg = np.clip(bg, 0.0, 1.0)
    bg.setflags(write=False)
    return bg


def category_color(category: str) -> np.ndarray:
    return np.random.default_rng(_key("color", category)).uniform(0.25, 0.95, 3)


@lru_cache(maxsize=512)
def _texture(category: str, kind: Kind, w: int, h: int) -> np.ndarray:
    """Object appearance at size ``w x h`` (before masking), values in [0, 1]."""
    rng = np.random.default_rng(_key("texture", category))
    color = category_color(category)
    yy, xx = np.mgrid[0:h, 0:w]
    if kind is Kind.MAN_MADE:
        period = rng.uniform(4.0, 8.0)
        coord = xx if rng.random() < 0.5 else yy
        pattern = np.where(np.sin(2 * np.pi * coord / period) >= 0, 1.0, -1.0)
        # a darker panel gives the object some internal structure
        pattern = np.where((xx >= w // 4) & (xx < 3 * w // 4) & (yy >= h // 3) & (yy < 2 * h // 3),
                           pattern - 0.8, pattern)
    else:
        field_rng = np.random.default_rng(_key("blobs", category, w, h))
        blobs = ndimage.gaussian_filter(field_rng.normal(0.0, 1.0, (h, w)), max(min(w, h) / 6.0, 1.0))
        pattern = blobs / (np.abs(blobs).max() + 1e-12)
    tex = color[None, None, :] * (1.0 + 0.25 * pattern[:, :, None])
    out = np.clip(tex, 0.0, 1.0)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=512)
def _shape_mask(kind: Kind, w: int, h: int) -> np.ndarray:
    if kind is Kind.MAN_MADE:
        m = np.ones((h, w), dtype=bool)
    else:
        yy, xx = np.mgrid[0:h, 0:w]
        m = ((xx + 0.5 - w / 2) / (w / 2)) ** 2 + ((yy + 0.5 - h / 2) / (h / 2)) ** 2 <= 1.0
    m.setflags(write=False)
    return m


def object_appearance(category: str, w: int, h: int, catalog: CategoryCatalog,
                      blend: Optional[tuple[str, float]] = None) -> tuple[np.ndarray, np.ndarray]:
    """(texture, mask) of a category at a given size, optionally blended toward another."""
    kind = catalog[catalog.index(category)].kind
    tex = _texture(category, kind, w, h)
    if blend is not None and blend[1] > 0:
        other, beta = blend
        other_tex = _texture(other, catalog[catalog.index(other)].kind, w, h)
        tex = (1.0 - beta) * tex + beta * other_tex
    return tex, _shape_mask(kind, w, h)


def _paste(canvas: np.ndarray, tex: np.ndarray, mask: np.ndarray, x0: int, y0: int, vis: float) -> None:
    H, W = canvas.shape[:2]
    h, w = mask.shape
    ys, xs = max(y0, 0), max(x0, 0)
    ye, xe = min(y0 + h, H), min(x0 + w, W)
    if ye <= ys or xe <= xs:
        return
    sub_t = tex[ys - y0:ye - y0, xs - x0:xe - x0]
    sub_m = mask[ys - y0:ye - y0, xs - x0:xe - x0]
    region = canvas[ys:ye, xs:xe]
    mixed = region + vis * (sub_t - region)
    region[sub_m] = mixed[sub_m]


def blend_weight(spec: ScenarioSpec, obj: ObjectTrack, t: int) -> Optional[tuple[str, float]]:
    b = spec.injections.blend_for(obj.view, obj.category)
    if b is None:
        return None
    return b.toward, b.start + (b.end - b.start) * obj.progress(t)


def render_frame(spec: ScenarioSpec, t: int, catalog: Optional[CategoryCatalog] = None) -> tuple[Frame, FrameTruth]:
    catalog = catalog or CategoryCatalog.default()
    scene = spec.scene_at(t)
    canvas = np.array(scene_background(scene, spec.width, spec.height))
    truths = []
    for obj in spec.objects:
        c = obj.center(t)
        if c is None:
            continue
        w, h = obj.size
        x0, y0 = int(round(c[0] - w / 2.0)), int(round(c[1] - h / 2.0))
        box = BoundingBox(x0, y0, w, h).clamp(spec.width, spec.height)
        if box is None:
            continue
        vis = obj.visibility(t)
        tex, mask = object_appearance(obj.category, w, h, catalog, blend_weight(spec, obj, t))
        _paste(canvas, tex, mask, x0, y0, vis)
        truths.append(ObjectTruth(obj.object_id, obj.category, box, obj.view, vis))
    if spec.noise > 0:
        rng = np.random.default_rng([spec.seed & 0xFFFFFFFF, t, _key("noise")])
        canvas += rng.normal(0.0, spec.noise, canvas.shape)
    np.clip(canvas, 0.0, 1.0, out=canvas)
    gain = spec.gain_at(t)
    if gain != 1.0:
        canvas *= gain
        np.clip(canvas, 0.0, 1.0, out=canvas)
    return Frame(t, t / spec.fps, canvas), FrameTruth(t, scene, tuple(truths))


def iter_render(spec: ScenarioSpec, catalog: Optional[CategoryCatalog] = None) -> Iterator[tuple[Frame, FrameTruth]]:
    for t in range(spec.frames):
        yield render_frame(spec, t, catalog)


def render(spec: ScenarioSpec, catalog: Optional[CategoryCatalog] = None) -> tuple[list[Frame], list[FrameTruth]]:
    """All frames and ground truth of a scenario (use :func:`iter_render` for long clips)."""
    frames, truth = [], []
    for f, g in iter_render(spec, catalog):
        frames.append(f)
        truth.append(g)
    return frames, truth


def write_frames(spec: ScenarioSpec, directory, catalog: Optional[CategoryCatalog] = None) -> list[Path]:
    from .ppm import write_ppm

    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for frame, _ in iter_render(spec, catalog):
        p = out / f"frame_{frame.index:05d}.ppm"
        write_ppm(p, frame.pixels)
        paths.append(p)
    return paths


# ------------------------------------------------------- training crops

def training_crops(catalog: CategoryCatalog, categories: Sequence[str], n_per_class: int, seed: int,
                   size_range: tuple[int, int] = (14, 28), scenes: Sequence[str] = ("street",),
                   noise: float = 0.01, blend: Optional[dict] = None,
                   margin: float = 0.0) -> tuple[list[np.ndarray], list[str]]:
    """Crops of rendered objects with randomized size, backdrop, gain and noise.

    ``blend`` maps a category to ``(toward, lo, hi)``; its crops then mix in
    the other category's texture with a weight drawn from ``[lo, hi]``.
    With ``margin > 0`` each side of the crop gets a random strip of
    backdrop up to that fraction of the object size, mimicking loose
    proposal boxes; ``margin = 0`` gives tight crops.
    """
    rng = np.random.default_rng(seed)
    crops, labels = [], []
    for name in categories:
        for _ in range(n_per_class):
            w, h = (int(v) for v in rng.integers(size_range[0], size_range[1] + 1, 2))
            scene = scenes[int(rng.integers(len(scenes)))]
            bg = scene_background(scene, 160, 120)
            if margin > 0:
                left, right = (int(round(v)) for v in rng.uniform(0, margin, 2) * w)
                top, bottom = (int(round(v)) for v in rng.uniform(0, margin, 2) * h)
            else:
                left = right = top = bottom = 0
            cw, ch = w + left + right, h + top + bottom
            y0, x0 = int(rng.integers(0, 120 - ch)), int(rng.integers(0, 160 - cw))
            canvas = np.array(bg[y0:y0 + ch, x0:x0 + cw])
            mix = None
            if blend and name in blend:
                toward, lo, hi = blend[name]
                mix = (toward, float(rng.uniform(lo, hi)))
            tex, mask = object_appearance(name, w, h, catalog, mix)
            _paste(canvas, tex, mask, left, top, 1.0)
            canvas = canvas * rng.uniform(0.85, 1.15) + rng.normal(0.0, noise, canvas.shape)
            crops.append(np.clip(canvas, 0.0, 1.0))
            labels.append(name)
    return crops, labels


# ----------------------------------------------------- context bootstrap

def scene_appearances(spec: ScenarioSpec) -> list[tuple[str, list[str]]]:
    """(scene, categories seen) for every scene segment of a scenario."""
    bounds = [s for s, _ in spec.scene_schedule] + [spec.frames]
    records = []
    for (start, scene), end in zip(spec.scene_schedule, bounds[1:]):
        seen = sorted({o.category for o in spec.objects
                       if o.first_frame < end and o.last_frame >= start})
        records.append((scene, seen))
    return records


def bootstrap_context(suite: Sequence[ScenarioSpec], categories: Optional[CategoryCatalog] = None,
                      scenes: Optional[SceneCatalog] = None, weight: float = 1.0,
                      smoothing: float = 1.0) -> ContextState:
    """Tally SO/OO counts from the ground truth of a scenario suite."""
    if not suite:
        raise ScenarioError("bootstrap needs a non-empty suite")
    categories = categories or CategoryCatalog.default()
    if scenes is None:
        names: list[str] = []
        for s in suite:
            names.extend(n for n in s.scenes if n not in names)
        scenes = SceneCatalog(names)
    records = [r for s in suite for r in scene_appearances(s)]
    return tally(scenes, categories, records, smoothing, weight)
