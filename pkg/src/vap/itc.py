"""Top-down correction of bottom-up class confidences.

Each top-down pathway contributes, per category, a correction

    C = P_context * a * exp(-(p_bu - mu)^2 / (2 sigma^2)) * tanh(b * (p_ctx - c))

where the Gaussian factor limits corrections to ambiguous bottom-up scores
and the tanh factor sets their sign from how expected the category is.
The scene and gist corrections are summed onto the bottom-up vector and
the result is clipped to [0, 1].
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import CategoryCatalog, GistPrediction, ScenePrediction, check_probs


@dataclass(frozen=True)
class FusionParams:
    a: float = 1.0
    mu: float = 1.0 / 5.0
    sigma: float = 1.0 / 3.0
    b: float = 10.0
    c: float = 1.0 / 8.0
    decision_threshold: float = 0.5

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("itc.a must be positive")
        if not self.sigma > 0:
            raise ValueError("itc.sigma must be positive")
        if not self.b > 0:
            raise ValueError("itc.b must be positive")
        if not 0 < self.c < 1:
            raise ValueError("itc.c must lie in (0, 1)")
        if not 0 < self.decision_threshold < 1:
            raise ValueError("itc.decision_threshold must lie in (0, 1)")


def r_magnitude(p_bu, params: FusionParams = FusionParams()):
    """Gaussian magnitude regulator; peaks at ``a`` when ``p_bu == mu``."""
    p_bu = np.asarray(p_bu, dtype=float)
    return params.a * np.exp(-((p_bu - params.mu) ** 2) / (2.0 * params.sigma ** 2))


def r_sign(p_ctx, params: FusionParams = FusionParams()):
    """tanh sign regulator; zero when ``p_ctx == c``."""
    p_ctx = np.asarray(p_ctx, dtype=float)
    return np.tanh(params.b * (p_ctx - params.c))


def correction(p_context_conf, p_bu, p_ctx, params: FusionParams = FusionParams()):
    """Correction coefficient of one top-down pathway (elementwise)."""
    return p_context_conf * r_magnitude(p_bu, params) * r_sign(p_ctx, params)


@dataclass
class FusedDecision:
    corrected: np.ndarray
    label: Optional[int]
    confidence: float
    scene_correction: np.ndarray
    gist_correction: np.ndarray

    @property
    def argmax(self) -> int:
        return int(np.argmax(self.corrected))


def decide(corrected: np.ndarray, tiebreak: np.ndarray, threshold: float) -> tuple[Optional[int], float]:
    """Argmax with ties resolved by ``tiebreak``, withheld below ``threshold``."""
    top = corrected.max()
    tied = np.flatnonzero(corrected == top)
    best = int(tied[np.argmax(tiebreak[tied])]) if len(tied) > 1 else int(tied[0])
    if top < threshold:
        return None, float(top)
    return best, float(top)


def fuse(p_bu: np.ndarray, scene: Optional[tuple[ScenePrediction, np.ndarray]],
         gist: Optional[GistPrediction], params: FusionParams, catalog: CategoryCatalog) -> FusedDecision:
    """Apply scene and gist corrections to a bottom-up vector.

    Either pathway may be ``None`` (disabled). The scene pathway is a
    ``(ScenePrediction, prior)`` pair with ``prior`` the per-category
    contextual probability. The gist pathway maps its man-made/natural call
    to a per-category probability: the gist confidence for categories of
    the predicted kind, its complement for the others.

    Categories tied after clipping are ordered by their bottom-up score.
    """
    n = len(catalog)
    p_bu = check_probs(p_bu, n, "bottom-up vector")
    zeros = np.zeros(n)
    c_scene = zeros
    if scene is not None:
        pred, prior = scene
        prior = check_probs(prior, n, "context prior")
        c_scene = correction(pred.confidence, p_bu, prior, params)
    c_gist = zeros
    if gist is not None:
        c_gist = correction(gist.confidence, p_bu, gist.agreement(catalog), params)
    corrected = np.clip(p_bu + c_scene + c_gist, 0.0, 1.0)
    label, conf = decide(corrected, p_bu, params.decision_threshold)
    return FusedDecision(corrected, label, conf, c_scene, c_gist)
