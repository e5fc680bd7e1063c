"""Self-supervised refinement of the bottom-up SVM from object-file feedback.

While an object is tracked, frames where the instantaneous decision
disagrees with the object-file's stable label (or agrees only narrowly)
are stored with the stable label as pseudo-label. When the scene has been
still for a while the classifier is retrained on them, and the update is
kept only if accuracy on a frozen regression set does not fall too far.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .objectfile import FileSnapshot
from .svm import DegenerateModelError, OneVsRestSvm, TrainingBuffer

log = logging.getLogger(__name__)


class GapReason(enum.Enum):
    WRONG_SIDE = "WrongSide"
    NEAR_MARGIN = "NearMargin"


@dataclass(frozen=True)
class GapSample:
    feature: np.ndarray
    pseudo_label: int
    reason: GapReason
    margin: float
    frame_index: int


@dataclass(frozen=True)
class ReinforceConfig:
    m_near: float = 0.5
    n_min_refine: int = 20
    idle_window: int = 30
    buffer_capacity: int = 200
    max_regression_drop: float = 0.05
    tol: float = 1e-3

    def __post_init__(self):
        if not self.m_near >= 0:
            raise ValueError("reinforce.m_near must be non-negative")
        if self.n_min_refine < 1:
            raise ValueError("reinforce.n_min_refine must be at least 1")
        if self.idle_window < 1:
            raise ValueError("reinforce.idle_window must be at least 1")
        if self.buffer_capacity < self.n_min_refine:
            raise ValueError("reinforce.buffer_capacity must be at least reinforce.n_min_refine")
        if not 0 <= self.max_regression_drop <= 1:
            raise ValueError("reinforce.max_regression_drop must lie in [0, 1]")


def harvest(file: FileSnapshot, instant_label: Optional[int], feature: Optional[np.ndarray],
            ensemble: OneVsRestSvm, m_near: float = 0.5, frame_index: int = 0) -> Optional[GapSample]:
    """Turn one tracked observation into a training sample, if it is informative.

    Unconfirmed files, observations without a feature vector and stable
    labels the ensemble does not model yield ``None``.
    """
    if not file.confirmed or feature is None or file.stable_label is None:
        return None
    margin = ensemble.margin(feature, file.stable_label)
    if margin is None:
        return None
    if instant_label != file.stable_label:
        return GapSample(feature, file.stable_label, GapReason.WRONG_SIDE, margin, frame_index)
    if abs(margin) < m_near:
        return GapSample(feature, file.stable_label, GapReason.NEAR_MARGIN, margin, frame_index)
    return None


class IdleDetector:
    """Tracks how many consecutive frames have had no motion proposals."""

    def __init__(self, window: int = 30):
        self.window = window
        self.still_frames = 0
        self.attempted = False  # one refinement attempt per idle period

    @property
    def idle(self) -> bool:
        return self.still_frames >= self.window

    @property
    def state(self) -> str:
        return "Idle" if self.idle else "Active"

    def observe(self, n_motion: int) -> str:
        if n_motion > 0:
            self.still_frames = 0
            self.attempted = False
        else:
            self.still_frames += 1
        return self.state


@dataclass(frozen=True)
class RefinementEvent:
    frame_index: int
    buffer_size: int
    pre_probe_accuracy: float
    post_probe_accuracy: float
    pre_regression_accuracy: float
    post_regression_accuracy: float
    accepted: bool


def maybe_refine(buffer: TrainingBuffer, idle: IdleDetector, ensemble: OneVsRestSvm,
                 config: ReinforceConfig = ReinforceConfig(),
                 regression: Optional[tuple[np.ndarray, np.ndarray]] = None,
                 frame_index: int = 0) -> tuple[OneVsRestSvm, Optional[RefinementEvent]]:
    """Refine ``ensemble`` on the buffer when the scene is idle.

    Returns the model to use from now on and the event record (``None``
    when nothing was attempted). A refinement whose regression-set accuracy
    drops by more than ``config.max_regression_drop`` is rolled back; the
    buffer is cleared after any completed attempt and kept when training
    itself fails.
    """
    if not idle.idle or idle.attempted or len(buffer) < config.n_min_refine:
        return ensemble, None
    idle.attempted = True
    X, y, w = buffer.arrays()
    try:
        refined = ensemble.refine(X, y, tol=config.tol, weights=w)
    except (DegenerateModelError, ValueError, np.linalg.LinAlgError) as exc:
        log.warning("refinement at frame %d failed, keeping the current model: %s", frame_index, exc)
        return ensemble, None
    pre_probe, post_probe = ensemble.accuracy(X, y), refined.accuracy(X, y)
    pre_reg = post_reg = float("nan")
    accepted = True
    if regression is not None and len(regression[1]):
        pre_reg = ensemble.accuracy(*regression)
        post_reg = refined.accuracy(*regression)
        if pre_reg - post_reg > config.max_regression_drop:
            accepted = False
            log.warning("refinement at frame %d rolled back: regression accuracy %.3f -> %.3f",
                        frame_index, pre_reg, post_reg)
    event = RefinementEvent(frame_index, len(buffer), pre_probe, post_probe, pre_reg, post_reg, accepted)
    buffer.clear()
    return (refined if accepted else ensemble), event
