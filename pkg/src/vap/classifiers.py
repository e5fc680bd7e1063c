"""Bottom-up and scene classifiers that stand in for the deep networks.

The oracles read the simulated ground truth attached to a region; the
feature stub actually looks at pixels, through a handful of cheap
handcrafted features and a one-vs-rest SVM, and is the one the
reinforcement stage can retrain.
"""
from __future__ import annotations

import zlib
from typing import Mapping, Optional, Sequence

import numpy as np

from .core import CategoryCatalog, DegenerateInputError, Frame, Region, ScenePrediction
from .svm import KernelSpec, OneVsRestSvm


def _region_rng(seed: int, region: Region) -> np.random.Generator:
    return np.random.default_rng([seed & 0xFFFFFFFF, *(k & 0xFFFFFFFF for k in region.key)])


def _check_region(region: Region, min_size: int) -> None:
    h, w = region.pixels.shape[:2]
    if h < min_size or w < min_size:
        raise DegenerateInputError(f"region {w}x{h} is smaller than the classifier minimum {min_size}")


class ZeroNoiseOracle:
    """Full confidence on the true category, zeros elsewhere and off-object.

    Partially visible objects get ``confidence * visibility``.
    """

    def __init__(self, catalog: CategoryCatalog, confidence: float = 1.0, min_size: int = 1):
        self.catalog = catalog
        self.confidence = confidence
        self.min_size = min_size

    def classify(self, region: Region) -> np.ndarray:
        _check_region(region, self.min_size)
        probs = np.zeros(len(self.catalog))
        if region.truth is not None:
            probs[self.catalog.index(region.truth.category)] = self.confidence * region.truth.visibility
        return probs


class ConfusablePairOracle:
    """Oracle that splits confidence between designated category pairs.

    For a category in a pair, the true class gets ``1 - ambiguity + e`` and
    its partner ``ambiguity - e`` with ``e ~ N(0, noise)`` drawn from a
    generator keyed on (seed, region), so the output is a pure function of
    the region. ``view_ambiguity`` overrides the ambiguity per view-tag.
    """

    def __init__(self, catalog: CategoryCatalog, pairs: Sequence[tuple[str, str]], ambiguity: float = 0.5,
                 noise: float = 0.0, view_ambiguity: Optional[Mapping[str, float]] = None,
                 seed: int = 0, min_size: int = 1):
        if not 0.0 <= ambiguity <= 1.0:
            raise ValueError("ambiguity must lie in [0, 1]")
        self.catalog = catalog
        self.partner: dict[int, int] = {}
        for a, b in pairs:
            ia, ib = catalog.index(a), catalog.index(b)
            self.partner[ia] = ib
            self.partner[ib] = ia
        self.ambiguity = ambiguity
        self.noise = noise
        self.view_ambiguity = dict(view_ambiguity or {})
        self.seed = seed
        self.min_size = min_size

    def classify(self, region: Region) -> np.ndarray:
        _check_region(region, self.min_size)
        probs = np.zeros(len(self.catalog))
        truth = region.truth
        if truth is None:
            return probs
        c = self.catalog.index(truth.category)
        if c not in self.partner:
            probs[c] = truth.visibility
            return probs
        amb = self.view_ambiguity.get(truth.view, self.ambiguity)
        eps = _region_rng(self.seed, region).normal(0.0, self.noise) if self.noise > 0 else 0.0
        probs[c] = np.clip(1.0 - amb + eps, 0.0, 1.0)
        probs[self.partner[c]] = np.clip(amb - eps, 0.0, 1.0)
        return probs * truth.visibility


def handcrafted_features(pixels: np.ndarray) -> np.ndarray:
    """Ten cheap appearance features of an RGB crop.

    Channel means (3), channel standard deviations (3), mean absolute
    horizontal and vertical gray gradients (2), log aspect ratio (1) and
    centre-minus-surround gray contrast (1).
    """
    px = np.asarray(pixels, dtype=float)
    h, w = px.shape[:2]
    gray = px.mean(axis=2)
    gx = np.abs(np.diff(gray, axis=1)).mean() if w > 1 else 0.0
    gy = np.abs(np.diff(gray, axis=0)).mean() if h > 1 else 0.0
    ch, cw = max(h // 4, 0), max(w // 4, 0)
    inner = gray[ch:h - ch, cw:w - cw]
    ring = gray.sum() - inner.sum()
    n_ring = gray.size - inner.size
    contrast = inner.mean() - (ring / n_ring if n_ring else inner.mean())
    return np.concatenate([
        px.reshape(-1, 3).mean(0),
        px.reshape(-1, 3).std(0),
        [gx, gy, np.log(w / h), contrast],
    ])


class FeatureStubClassifier:
    """Linear (or kernel) one-vs-rest SVM over :func:`handcrafted_features`."""

    def __init__(self, catalog: CategoryCatalog, ensemble: OneVsRestSvm, min_size: int = 4):
        self.catalog = catalog
        self.ensemble = ensemble
        self.min_size = min_size

    @classmethod
    def fit(cls, catalog: CategoryCatalog, crops: Sequence[np.ndarray], labels: Sequence[str],
            kernel: KernelSpec = KernelSpec("linear"), C: float = 1.0,
            calib_crops: Optional[Sequence[np.ndarray]] = None,
            calib_labels: Optional[Sequence[str]] = None, min_size: int = 4) -> "FeatureStubClassifier":
        X = np.array([handcrafted_features(c) for c in crops])
        y = np.array([catalog.index(n) for n in labels])
        cX = cy = None
        if calib_crops is not None:
            cX = np.array([handcrafted_features(c) for c in calib_crops])
            cy = np.array([catalog.index(n) for n in calib_labels])
        ens = OneVsRestSvm.fit(X, y, len(catalog), kernel=kernel, C=C, calib_X=cX, calib_labels=cy)
        return cls(catalog, ens, min_size)

    def features(self, region: Region) -> np.ndarray:
        _check_region(region, self.min_size)
        return handcrafted_features(region.pixels)

    def classify_features(self, x: np.ndarray) -> np.ndarray:
        return self.ensemble.predict_proba(x[None, :])[0]

    def classify(self, region: Region) -> np.ndarray:
        return self.classify_features(self.features(region))

    def with_ensemble(self, ensemble: OneVsRestSvm) -> "FeatureStubClassifier":
        return FeatureStubClassifier(self.catalog, ensemble, self.min_size)


class SceneStub:
    """Scene classifier keyed to the true scene, wrong with probability ``flip_rate``.

    A flipped frame reports a uniformly chosen other scene. Draws are keyed
    on (seed, frame index).
    """

    def __init__(self, n_scenes: int, flip_rate: float = 0.0, confidence: float = 1.0, seed: int = 0):
        if not 0.0 <= flip_rate <= 1.0:
            raise ValueError("flip_rate must lie in [0, 1]")
        self.n_scenes = n_scenes
        self.flip_rate = flip_rate
        self.confidence = confidence
        self.seed = seed

    def classify_scene(self, frame: Frame, true_scene: Optional[int] = None) -> ScenePrediction:
        if true_scene is None:
            true_scene = 0
        if self.n_scenes < 2 or self.flip_rate == 0.0:
            return ScenePrediction(true_scene, self.confidence)
        rng = np.random.default_rng([self.seed & 0xFFFFFFFF, frame.index, zlib.crc32(b"scene")])
        if rng.random() < self.flip_rate:
            other = int(rng.integers(0, self.n_scenes - 1))
            scene = other if other < true_scene else other + 1
            return ScenePrediction(scene, self.confidence)
        return ScenePrediction(true_scene, self.confidence)
