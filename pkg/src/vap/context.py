"""Scene-object and object-object co-occurrence statistics.

Counts are Laplace-smoothed before row normalization so that no category
ever receives a hard-zero contextual prior.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import CategoryCatalog, SceneCatalog, ScenePrediction

FORMAT_VERSION = 1


@dataclass(frozen=True)
class SOMatrix:
    counts: np.ndarray  # (S, O)
    smoothing: float = 1.0

    def __post_init__(self):
        if self.counts.ndim != 2 or (self.counts < 0).any():
            raise ValueError("SO counts must be a non-negative S x O matrix")
        if not self.smoothing > 0:
            raise ValueError("SO smoothing must be positive")

    @classmethod
    def zeros(cls, n_scenes: int, n_objects: int, smoothing: float = 1.0) -> "SOMatrix":
        return cls(np.zeros((n_scenes, n_objects)), smoothing)

    def normalized(self) -> np.ndarray:
        c = self.counts + self.smoothing
        return c / c.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class OOMatrix:
    """Symmetric co-appearance counts; the diagonal never enters the normalized view."""

    counts: np.ndarray  # (O, O)
    smoothing: float = 1.0

    def __post_init__(self):
        c = self.counts
        if c.ndim != 2 or c.shape[0] != c.shape[1] or (c < 0).any():
            raise ValueError("OO counts must be a non-negative square matrix")
        if not np.allclose(c, c.T):
            raise ValueError("OO counts must be symmetric")
        if not self.smoothing > 0:
            raise ValueError("OO smoothing must be positive")

    @classmethod
    def zeros(cls, n_objects: int, smoothing: float = 1.0) -> "OOMatrix":
        return cls(np.zeros((n_objects, n_objects)), smoothing)

    def normalized(self) -> np.ndarray:
        c = self.counts + self.smoothing
        np.fill_diagonal(c, 0.0)
        return c / c.sum(axis=1, keepdims=True)


def prior_from_context(so: SOMatrix, oo: OOMatrix, scene: ScenePrediction,
                       present: Iterable[int] = (), alpha_mix: float = 0.7) -> np.ndarray:
    """Probability of each category appearing, given the scene and confirmed objects.

    Mixes the scene's SO row with the mean OO row of the categories already
    confirmed in view; with nothing confirmed, the SO row alone.
    """
    if not 0.0 <= alpha_mix <= 1.0:
        raise ValueError("alpha_mix must lie in [0, 1]")
    if not 0 <= scene.scene_id < so.counts.shape[0]:
        raise KeyError(f"unknown scene id {scene.scene_id}")
    row = so.normalized()[scene.scene_id]
    present = sorted(set(present))
    if not present:
        return row
    co = oo.normalized()[present].mean(axis=0)
    return np.clip(alpha_mix * row + (1.0 - alpha_mix) * co, 0.0, 1.0)


def update_context(so: SOMatrix, oo: OOMatrix, scene_id: int, confirmed: Iterable[int],
                   partners: Iterable[int] = ()) -> tuple[SOMatrix, OOMatrix]:
    """Count confirmed categories in the scene and their co-appearances.

    Every unordered pair within ``confirmed`` is counted, plus every pair of
    a confirmed category with one of ``partners`` (objects confirmed
    earlier that are still in view, which are not re-counted in SO).
    """
    confirmed = sorted(set(confirmed))
    partners = sorted(set(partners) - set(confirmed))
    if not confirmed:
        return so, oo
    so_c = so.counts.copy()
    oo_c = oo.counts.copy()
    for c in confirmed:
        so_c[scene_id, c] += 1.0
    for a_i, a in enumerate(confirmed):
        for b in confirmed[a_i + 1:] + partners:
            if a != b:
                oo_c[a, b] += 1.0
                oo_c[b, a] += 1.0
    return SOMatrix(so_c, so.smoothing), OOMatrix(oo_c, oo.smoothing)


@dataclass
class ContextState:
    """SO/OO matrices bound to their scene and category catalogs."""

    scenes: SceneCatalog
    categories: CategoryCatalog
    so: SOMatrix
    oo: OOMatrix
    alpha_mix: float = 0.7

    @classmethod
    def empty(cls, scenes: SceneCatalog, categories: CategoryCatalog, smoothing: float = 1.0,
              alpha_mix: float = 0.7) -> "ContextState":
        return cls(scenes, categories, SOMatrix.zeros(len(scenes), len(categories), smoothing),
                   OOMatrix.zeros(len(categories), smoothing), alpha_mix)

    def prior(self, scene: ScenePrediction, present: Iterable[int] = ()) -> np.ndarray:
        return prior_from_context(self.so, self.oo, scene, present, self.alpha_mix)

    def update(self, scene_id: int, confirmed: Iterable[int], partners: Iterable[int] = ()) -> None:
        self.so, self.oo = update_context(self.so, self.oo, scene_id, confirmed, partners)

    def to_dict(self) -> dict:
        return {
            "format": "vap-context",
            "version": FORMAT_VERSION,
            "scenes": list(self.scenes.names),
            "categories": self.categories.names,
            "kinds": [c.kind.value for c in self.categories],
            "so_smoothing": self.so.smoothing,
            "oo_smoothing": self.oo.smoothing,
            "so_counts": self.so.counts.tolist(),
            "oo_counts": self.oo.counts.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict, alpha_mix: float = 0.7) -> "ContextState":
        if d.get("format") != "vap-context" or d.get("version") != FORMAT_VERSION:
            raise ValueError("not a version-1 vap-context file")
        scenes = SceneCatalog(d["scenes"])
        cats = CategoryCatalog.from_names(d["categories"], d["kinds"])
        so = SOMatrix(np.asarray(d["so_counts"], dtype=float).reshape(len(scenes), len(cats)),
                      float(d.get("so_smoothing", 1.0)))
        oo = OOMatrix(np.asarray(d["oo_counts"], dtype=float).reshape(len(cats), len(cats)),
                      float(d.get("oo_smoothing", 1.0)))
        return cls(scenes, cats, so, oo, alpha_mix)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path, alpha_mix: float = 0.7) -> "ContextState":
        with open(path) as fh:
            return cls.from_dict(json.load(fh), alpha_mix)


def tally(scenes: SceneCatalog, categories: CategoryCatalog,
          appearances: Sequence[tuple[str, Sequence[str]]], smoothing: float = 1.0,
          weight: float = 1.0) -> ContextState:
    """Build a context from (scene, categories-seen-together) records.

    Each record adds ``weight`` to SO for every category in it and to OO for
    every unordered pair of distinct categories.
    """
    state = ContextState.empty(scenes, categories, smoothing)
    so = state.so.counts.copy()
    oo = state.oo.counts.copy()
    for scene, names in appearances:
        s = scenes.index(scene)
        idx = sorted({categories.index(n) for n in names})
        for c in idx:
            so[s, c] += weight
        for i, a in enumerate(idx):
            for b in idx[i + 1:]:
                oo[a, b] += weight
                oo[b, a] += weight
    state.so = SOMatrix(so, smoothing)
    state.oo = OOMatrix(oo, smoothing)
    return state
