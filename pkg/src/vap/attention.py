"""Region proposals from motion, saliency and random saccades.

Motion uses a running per-pixel Gaussian background model combined with
differencing over a five-frame window. The three sources are merged by
greedy suppression with Motion > Saliency > Random priority.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

import numpy as np
from scipy import ndimage

from .core import BoundingBox, Frame

VARIANCE_FLOOR = 1e-6


class Source(enum.IntEnum):
    # lower value wins during suppression
    MOTION = 0
    SALIENCY = 1
    RANDOM = 2


@dataclass
class AttentionConfig:
    alpha_bg: float = 0.05
    k_bg: float = 3.0
    tau_diff: float = 0.05
    min_area: int = 25
    n_saccade: int = 3
    saccade_size: tuple[int, int] = (16, 40)
    saccade_retries: int = 50
    iou_threshold: float = 0.5
    max_proposals: int = 64
    init_variance: float = 1e-4

    def __post_init__(self):
        if not 0 < self.alpha_bg <= 1:
            raise ValueError("attention.alpha_bg must lie in (0, 1]")
        if not self.k_bg > 0:
            raise ValueError("attention.k_bg must be positive")
        if not 0 < self.iou_threshold < 1:
            raise ValueError("attention.iou_threshold must lie in (0, 1)")
        if self.max_proposals < 1:
            raise ValueError("attention.max_proposals must be at least 1")
        lo, hi = self.saccade_size
        if not 2 <= lo <= hi:
            raise ValueError("attention.saccade_size must be an increasing pair >= 2")


@dataclass
class BackgroundModel:
    """Per-pixel, per-channel running mean and variance of intensity."""

    mean: np.ndarray
    var: np.ndarray
    alpha: float = 0.05
    k: float = 3.0

    @classmethod
    def from_frame(cls, frame: Frame, alpha: float = 0.05, k: float = 3.0,
                   init_variance: float = 1e-4) -> "BackgroundModel":
        px = frame.pixels.astype(float)
        return cls(px.copy(), np.full(px.shape, max(init_variance, VARIANCE_FLOOR)), alpha, k)

    def foreground(self, pixels: np.ndarray) -> np.ndarray:
        """Pixels deviating by more than k standard deviations in any channel."""
        dev = np.abs(pixels - self.mean) > self.k * np.sqrt(self.var)
        return dev.any(axis=2)


def update_background(model: BackgroundModel, frame: Frame, hold: Optional[np.ndarray] = None) -> BackgroundModel:
    """Exponential running update of the per-pixel mean and variance.

    Pixels where the optional boolean ``hold`` mask is set keep their
    previous statistics, so tracked objects are not absorbed into the
    background while they pass.
    """
    px = frame.pixels
    if px.shape != model.mean.shape:
        raise ValueError(f"frame shape {px.shape} does not match background {model.mean.shape}")
    a = model.alpha
    mean = (1.0 - a) * model.mean + a * px
    var = np.maximum((1.0 - a) * model.var + a * (px - mean) ** 2, VARIANCE_FLOOR)
    if hold is not None:
        if hold.shape != px.shape[:2]:
            raise ValueError(f"hold mask shape {hold.shape} does not match frame {px.shape[:2]}")
        mean[hold] = model.mean[hold]
        var[hold] = model.var[hold]
    return BackgroundModel(mean, var, a, model.k)


def boxes_mask(shape: tuple[int, int], boxes: Sequence[BoundingBox], margin: int = 0) -> np.ndarray:
    """Boolean mask covering ``boxes`` grown by ``margin`` pixels."""
    mask = np.zeros(shape, dtype=bool)
    for b in boxes:
        y1, x1 = max(int(np.floor(b.y)) - margin, 0), max(int(np.floor(b.x)) - margin, 0)
        mask[y1:int(np.ceil(b.y2)) + margin, x1:int(np.ceil(b.x2)) + margin] = True
    return mask


def difference_mask(recent: Sequence[Frame], tau: float) -> np.ndarray:
    """Union of the thresholded absolute differences of adjacent frames."""
    mask = np.zeros(recent[0].pixels.shape[:2], dtype=bool)
    for prev, cur in zip(recent[:-1], recent[1:]):
        mask |= (np.abs(cur.pixels - prev.pixels) > tau).any(axis=2)
    return mask


def mask_to_boxes(mask: np.ndarray, min_area: int) -> list[BoundingBox]:
    labels, n = ndimage.label(mask)
    boxes = []
    for k, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None:
            continue
        area = int((labels[sl] == k).sum())
        if area < min_area:
            continue
        rows, cols = sl
        boxes.append(BoundingBox(cols.start, rows.start, cols.stop - cols.start, rows.stop - rows.start))
    return boxes


def detect_motion(model: BackgroundModel, recent: Sequence[Frame], tau_diff: float = 0.05,
                  min_area: int = 25) -> list[BoundingBox]:
    """Boxes around moving objects in the newest of five consecutive frames.

    The seed mask is the background foreground of the newest frame AND the
    five-frame difference union. Each box spans the whole background
    foreground component that a seed touches, so an object is boxed in full
    even where its interior did not change inside the window.
    """
    if len(recent) < 5:
        return []
    recent = list(recent)[-5:]
    idx = [f.index for f in recent]
    if any(b - a != 1 for a, b in zip(idx[:-1], idx[1:])):
        raise ValueError(f"motion window must hold consecutive frames, got indices {idx}")
    fg = model.foreground(recent[-1].pixels)
    seed = fg & difference_mask(recent, tau_diff)
    if not seed.any():
        return []
    full = ndimage.binary_propagation(seed, mask=fg)
    return mask_to_boxes(full, min_area)


def _overlaps_any(box: BoundingBox, others: Sequence[BoundingBox]) -> bool:
    return any(box.intersection(o) > 0 for o in others)


def random_saccades(frame_dims: tuple[int, int], motion_boxes: Sequence[BoundingBox],
                    saliency_boxes: Sequence[BoundingBox], rng: np.random.Generator,
                    n_saccade: int = 3, size_range: tuple[int, int] = (16, 40),
                    retries: int = 50) -> list[BoundingBox]:
    """Exploration boxes sampled in the part of the frame no other proposal covers.

    ``frame_dims`` is ``(width, height)``. Rejection sampling stops after
    ``retries`` failed draws per box, so fewer boxes may come back.
    """
    width, height = frame_dims
    taken = list(motion_boxes) + list(saliency_boxes)
    out: list[BoundingBox] = []
    lo, hi = size_range
    hi_w, hi_h = min(hi, width), min(hi, height)
    for _ in range(n_saccade):
        for _ in range(retries):
            w = int(rng.integers(min(lo, hi_w), hi_w + 1))
            h = int(rng.integers(min(lo, hi_h), hi_h + 1))
            x = int(rng.integers(0, width - w + 1))
            y = int(rng.integers(0, height - h + 1))
            box = BoundingBox(x, y, w, h)
            if not _overlaps_any(box, taken):
                out.append(box)
                taken.append(box)
                break
    return out


@dataclass(frozen=True)
class Proposal:
    box: BoundingBox
    source: Source


@dataclass
class ProposalSet:
    proposals: list[Proposal] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.proposals)

    def __iter__(self):
        return iter(self.proposals)

    def boxes(self, source: Optional[Source] = None) -> list[BoundingBox]:
        return [p.box for p in self.proposals if source is None or p.source is source]


def merge_proposals(motion: Sequence[BoundingBox], saliency: Sequence[BoundingBox],
                    random: Sequence[BoundingBox], iou_threshold: float = 0.5,
                    max_proposals: int = 64) -> ProposalSet:
    """Greedy suppression ordered by source priority, then by area (largest first)."""
    if not 0 < iou_threshold < 1:
        raise ValueError("iou_threshold must lie in (0, 1)")
    tagged = [Proposal(b, Source.MOTION) for b in motion]
    tagged += [Proposal(b, Source.SALIENCY) for b in saliency]
    tagged += [Proposal(b, Source.RANDOM) for b in random]
    # stable sort keeps input order among equal keys
    tagged.sort(key=lambda p: (int(p.source), -p.box.area))
    kept: list[Proposal] = []
    for p in tagged:
        if all(p.box.iou(k.box) <= iou_threshold for k in kept):
            kept.append(p)
            if len(kept) == max_proposals:
                break
    return ProposalSet(kept)


class SaliencySource(Protocol):
    def propose(self, frame: Frame, truth_boxes: Sequence[BoundingBox], rng: np.random.Generator) -> list[BoundingBox]: ...


class GroundTruthProposer:
    """Stands in for a region-proposal network: jittered ground-truth boxes.

    Each true box is proposed with probability ``recall`` and its corners
    perturbed by up to ``jitter`` times its size.
    """

    def __init__(self, jitter: float = 0.1, recall: float = 1.0):
        self.jitter = jitter
        self.recall = recall

    def propose(self, frame, truth_boxes, rng):
        out = []
        for b in truth_boxes:
            if rng.random() >= self.recall:
                continue
            dx, dy, dw, dh = rng.uniform(-self.jitter, self.jitter, size=4)
            box = BoundingBox(b.x + dx * b.w, b.y + dy * b.h, b.w * (1 + dw), b.h * (1 + dh))
            box = box.clamp(frame.width, frame.height)
            if box is not None:
                out.append(box)
        return out


class LocalContrastProposer:
    """Proposes blocks whose intensity variance stands out from the frame.

    The frame is tiled into ``block`` x ``block`` cells; cells whose variance
    exceeds the median by ``ratio`` and are local maxima become proposals.
    """

    def __init__(self, block: int = 16, ratio: float = 4.0, max_boxes: int = 8):
        self.block = block
        self.ratio = ratio
        self.max_boxes = max_boxes

    def propose(self, frame, truth_boxes=(), rng=None):
        gray = frame.pixels.mean(axis=2)
        b = self.block
        H, W = gray.shape
        nh, nw = H // b, W // b
        if nh == 0 or nw == 0:
            return []
        cells = gray[: nh * b, : nw * b].reshape(nh, b, nw, b).var(axis=(1, 3))
        base = max(np.median(cells), 1e-6)
        peaks = (cells == ndimage.maximum_filter(cells, size=3)) & (cells > self.ratio * base)
        order = np.argsort(-cells[peaks], kind="stable")
        coords = np.argwhere(peaks)[order][: self.max_boxes]
        return [BoundingBox(c * b, r * b, b, b) for r, c in coords]
