"""Standard scenario suites used by the demos and the acceptance tests.

Every generator is a pure function of its arguments and returns parsed
:class:`ScenarioSpec` objects (serialize with
:func:`vap.scenario.save_scenarios`).
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from .core import CategoryCatalog
from .scenario import ScenarioSpec, parse_scenario

AMBIGUITY_SCENES = ("street", "harbor", "farm")
AMBIGUITY_PAIRS = (("car", "boat"), ("dog", "cow"))
# what lives where; the confusable partners never share a scene
SCENE_OBJECTS = {
    "street": ("car", "dog", "person"),
    "harbor": ("boat", "person"),
    "farm": ("cow", "person"),
}
SIZES = {"car": (24, 14), "boat": (26, 12), "dog": (16, 12), "cow": (24, 16),
         "person": (10, 20), "bicycle": (22, 14), "plant": (14, 18)}


def _crossing(rng: np.random.Generator, width: int, lane_y: float, start: int, end: int,
              leftward: bool) -> list[list[float]]:
    x0, x1 = (width - 12.0, 12.0) if leftward else (12.0, width - 12.0)
    wobble = float(rng.uniform(-6, 6))
    mid = (start + end) // 2
    return [[start, x0, lane_y], [mid, (x0 + x1) / 2, lane_y + wobble], [end, x1, lane_y]]


def single_object(category: str = "car", frames: int = 40, seed: int = 0, scene: str = "street",
                  **extra) -> ScenarioSpec:
    """One object crossing the frame left to right, visible from the first frame after warm-up."""
    d = {
        "name": f"single-{category}", "frames": frames, "seed": seed, "scenes": [scene],
        "objects": [{"id": "o1", "category": category, "size": list(SIZES.get(category, (20, 14))),
                     "waypoints": [[5, 14, 60], [max(frames - 1, 6), 146, 60]]}],
    }
    d.update(extra)
    return parse_scenario(d)


def static_scene(frames: int = 40, seed: int = 0, scene: str = "street") -> ScenarioSpec:
    return parse_scenario({"name": "static", "frames": frames, "seed": seed, "scenes": [scene]})


def ambiguity_clip(scene: str, seed: int, frames: int = 90, ambiguity: float = 0.5,
                   noise: float = 0.05, n_objects: int = 2) -> ScenarioSpec:
    """Objects native to ``scene`` crossing on separate lanes, confusable-pair injections."""
    rng = np.random.default_rng([seed, AMBIGUITY_SCENES.index(scene)])
    natives = list(SCENE_OBJECTS[scene])
    picks = [natives[0]] + list(rng.choice(natives[1:], size=max(n_objects - 1, 0), replace=True))
    lanes = np.linspace(30, 95, len(picks))
    objects = []
    for k, (cat, lane) in enumerate(zip(picks, lanes)):
        start = 5 + 3 * k
        end = frames - 1 - int(rng.integers(0, 10))
        objects.append({"id": f"{scene}-{k}", "category": str(cat), "size": list(SIZES[str(cat)]),
                        "waypoints": _crossing(rng, 160, float(lane), start, end, bool(k % 2))})
    return parse_scenario({
        "name": f"ambiguity-{scene}-{seed}", "frames": frames, "seed": seed, "scenes": list(AMBIGUITY_SCENES),
        "scene_schedule": [[0, scene]], "objects": objects,
        "injections": {"pairs": [list(p) for p in AMBIGUITY_PAIRS], "ambiguity": ambiguity, "noise": noise},
    })


def ambiguity_suite(seed: int = 0, clips_per_scene: int = 2, frames: int = 90,
                    ambiguity: float = 0.5, noise: float = 0.05) -> list[ScenarioSpec]:
    """Clips cycling through the scenes; car/boat and dog/cow are confusable pairs."""
    specs = []
    for r in range(clips_per_scene):
        for scene in AMBIGUITY_SCENES:
            specs.append(ambiguity_clip(scene, seed * 1000 + r, frames, ambiguity, noise))
    return specs


def ambiguity_bootstrap_suite(seed: int = 1, clips_per_scene: int = 5) -> list[ScenarioSpec]:
    """Training-side suite with the same scene/object statistics, for the SO/OO bootstrap."""
    return ambiguity_suite(seed=seed + 7919, clips_per_scene=clips_per_scene, frames=40)


def occlusion_scenario(seed: int = 0, frames: int = 80, windows: tuple[tuple[int, int], ...] = ((30, 35), (55, 60)),
                       visibility: float = 0.15, category: str = "car") -> ScenarioSpec:
    """One object passing behind shade for five-frame windows (bottom-up confidence 0.15)."""
    return parse_scenario({
        "name": "occlusion", "frames": frames, "seed": seed, "scenes": ["street"],
        "objects": [{"id": "o1", "category": category, "size": list(SIZES[category]),
                     "waypoints": [[5, 14, 60], [frames - 1, 146, 60]],
                     "occlusions": [[a, b, visibility] for a, b in windows]}],
    })


def viewpoint_suite(seed: int = 0, pattern: str = "HTHTHTHT", frames: int = 110,
                    hard: tuple[float, float] = (0.6, 0.75), teach: tuple[float, float] = (0.15, 0.75),
                    others: tuple[str, ...] = ("person", "car"), toward: str = "car") -> list[ScenarioSpec]:
    """Elevated-view bicycles whose look is shifted toward ``toward``.

    ``pattern`` lists the clips: ``H`` clips show a bicycle already in the
    shifted look (blend weight ramping over ``hard``), ``T`` clips one whose
    look drifts gradually from nearly ground-view (``teach``), so its
    object-file can settle on the right label before the shift sets in.
    Teaching clips also carry a ground-view object from ``others`` on a
    second lane. Every clip ends with ~40 still frames for idle-time
    refinement.
    """
    specs = []
    active = frames - 42
    for k, kind in enumerate(pattern):
        if kind not in "HT":
            raise ValueError("viewpoint pattern letters must be H or T")
        rng = np.random.default_rng([seed, k])
        ramp = hard if kind == "H" else teach
        objects = [{"id": f"bike-{k}", "category": "bicycle", "size": list(SIZES["bicycle"]), "view": "elevated",
                    "waypoints": _crossing(rng, 160, 45.0, 5, active, bool(k % 2))}]
        if others and kind == "T":
            cat = others[(k // 2) % len(others)]
            objects.append({"id": f"other-{k}", "category": cat, "size": list(SIZES[cat]),
                            "waypoints": _crossing(rng, 160, 95.0, 8, active - 5, not bool(k % 2))})
        specs.append(parse_scenario({
            "name": f"viewpoint-{k}-{kind}", "frames": frames, "seed": seed * 100 + k, "scenes": ["street"],
            "objects": objects,
            "injections": {"view_blend": {"elevated": {"bicycle": {"toward": toward, "range": list(ramp)}}}},
        }))
    return specs


def street_bootstrap_suite(seed: int = 0, repeats: int = 2) -> list[ScenarioSpec]:
    """Ground-view street clips showing every pair of car, person, bicycle and dog equally often."""
    specs = []
    cats = ("car", "person", "bicycle", "dog")
    pairs = [(a, b) for i, a in enumerate(cats) for b in cats[i + 1:]]
    for k, pair in enumerate(pairs * repeats):
        rng = np.random.default_rng([seed, 17, k])
        objects = [{"id": f"s{k}-{j}", "category": c, "size": list(SIZES[c]),
                    "waypoints": _crossing(rng, 160, 40.0 + 50 * j, 5, 35, bool(j))} for j, c in enumerate(pair)]
        specs.append(parse_scenario({"name": f"street-{k}", "frames": 40, "seed": k, "scenes": ["street"],
                                     "objects": objects}))
    return specs


def co_appearance_suite(seed: int = 0) -> list[ScenarioSpec]:
    """Three clips in which person and bicycle always appear together."""
    specs = []
    for k, scene in enumerate(("street", "park", "street")):
        rng = np.random.default_rng([seed, k])
        specs.append(parse_scenario({
            "name": f"together-{k}", "frames": 30, "seed": k, "scenes": ["street", "park"],
            "scene_schedule": [[0, scene]],
            "objects": [
                {"id": "p", "category": "person", "size": [10, 20], "waypoints": _crossing(rng, 160, 40, 5, 29, False)},
                {"id": "b", "category": "bicycle", "size": [22, 14], "waypoints": _crossing(rng, 160, 90, 5, 29, True)},
            ],
        }))
    return specs


def stub_categories(specs, catalog: Optional[CategoryCatalog] = None) -> tuple[str, ...]:
    catalog = catalog or CategoryCatalog.default()
    seen = {o.category for s in specs for o in s.objects}
    return tuple(n for n in catalog.names if n in seen)
