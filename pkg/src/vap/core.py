"""Domain types shared by every stage of the recognition pipeline.

All probability vectors are plain ``numpy`` float arrays indexed by the
object-category catalog. They hold independent per-class confidences and
are not required to sum to one.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

import numpy as np


class DegenerateInputError(ValueError):
    """Raised when an input is too small or too uniform to be processed."""


class Kind(enum.Enum):
    MAN_MADE = "ManMade"
    NATURAL = "Natural"


@dataclass(frozen=True)
class Category:
    name: str
    kind: Kind


# The 25 object categories used for pre-training, with their gross class.
DEFAULT_CATEGORIES = (
    ("cabinet", Kind.MAN_MADE),
    ("chair", Kind.MAN_MADE),
    ("person", Kind.NATURAL),
    ("bed", Kind.MAN_MADE),
    ("car", Kind.MAN_MADE),
    ("plant", Kind.NATURAL),
    ("plant pot", Kind.MAN_MADE),
    ("desk", Kind.MAN_MADE),
    ("sink", Kind.MAN_MADE),
    ("clock", Kind.MAN_MADE),
    ("sofa", Kind.MAN_MADE),
    ("bookcase", Kind.MAN_MADE),
    ("television", Kind.MAN_MADE),
    ("telephone", Kind.MAN_MADE),
    ("boat", Kind.MAN_MADE),
    ("shoe", Kind.MAN_MADE),
    ("washing machine", Kind.MAN_MADE),
    ("traffic lights", Kind.MAN_MADE),
    ("bicycle", Kind.MAN_MADE),
    ("teddy bear", Kind.MAN_MADE),
    ("cow", Kind.NATURAL),
    ("dog", Kind.NATURAL),
    ("crosswalk", Kind.MAN_MADE),
    ("conference table", Kind.MAN_MADE),
    ("aircraft", Kind.MAN_MADE),
)


class CategoryCatalog:
    """Ordered, immutable list of object categories.

    Every probability vector and context matrix row in a run indexes into
    this ordering.
    """

    def __init__(self, categories: Sequence[Category]):
        categories = tuple(categories)
        if not categories:
            raise ValueError("category catalog must not be empty")
        names = [c.name for c in categories]
        if len(set(names)) != len(names):
            raise ValueError("category names must be unique")
        self._categories = categories
        self._index = {name: i for i, name in enumerate(names)}

    @classmethod
    def default(cls) -> "CategoryCatalog":
        return cls([Category(n, k) for n, k in DEFAULT_CATEGORIES])

    @classmethod
    def from_names(cls, names: Sequence[str], kinds: Sequence[str]) -> "CategoryCatalog":
        return cls([Category(n, Kind(k)) for n, k in zip(names, kinds)])

    def __len__(self) -> int:
        return len(self._categories)

    def __iter__(self):
        return iter(self._categories)

    def __getitem__(self, i: int) -> Category:
        return self._categories[i]

    def __eq__(self, other) -> bool:
        return isinstance(other, CategoryCatalog) and self._categories == other._categories

    def __hash__(self) -> int:
        return hash(self._categories)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self._categories]

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"unknown category {name!r}") from None

    def kind_mask(self, kind: Kind) -> np.ndarray:
        return np.array([c.kind is kind for c in self._categories])


class SceneCatalog:
    """Ordered list of scene names the scene classifier can report."""

    def __init__(self, names: Sequence[str]):
        names = tuple(names)
        if not names:
            raise ValueError("scene catalog must not be empty")
        if len(set(names)) != len(names):
            raise ValueError("scene names must be unique")
        self.names = names
        self._index = {n: i for i, n in enumerate(names)}

    def __len__(self) -> int:
        return len(self.names)

    def __eq__(self, other) -> bool:
        return isinstance(other, SceneCatalog) and self.names == other.names

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"unknown scene {name!r}") from None


def check_probs(values: np.ndarray, size: Optional[int] = None, what: str = "probability vector") -> np.ndarray:
    """Validate a probability vector at a module boundary and return it as float64."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 1:
        raise ValueError(f"{what} must be 1-D, got shape {values.shape}")
    if size is not None and values.shape[0] != size:
        raise ValueError(f"{what} has length {values.shape[0]}, expected {size}")
    if not np.all(np.isfinite(values)) or values.min(initial=0.0) < 0.0 or values.max(initial=0.0) > 1.0:
        raise ValueError(f"{what} entries must lie in [0, 1]")
    return values


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in pixel units, ``(x, y)`` is the top-left corner."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box must have positive size, got w={self.w}, h={self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    def intersection(self, other: "BoundingBox") -> float:
        iw = min(self.x2, other.x2) - max(self.x, other.x)
        ih = min(self.y2, other.y2) - max(self.y, other.y)
        if iw <= 0 or ih <= 0:
            return 0.0
        return iw * ih

    def iou(self, other: "BoundingBox") -> float:
        inter = self.intersection(other)
        if inter == 0.0:
            return 0.0
        return inter / (self.area + other.area - inter)

    def clamp(self, width: int, height: int) -> Optional["BoundingBox"]:
        """Clip to the frame; ``None`` when nothing is left."""
        x1, y1 = max(self.x, 0.0), max(self.y, 0.0)
        x2, y2 = min(self.x2, float(width)), min(self.y2, float(height))
        if x2 - x1 <= 0 or y2 - y1 <= 0:
            return None
        return BoundingBox(x1, y1, x2 - x1, y2 - y1)

    def slices(self) -> tuple[slice, slice]:
        """Integer row/column slices covering the box."""
        x1, y1 = int(np.floor(self.x)), int(np.floor(self.y))
        x2, y2 = int(np.ceil(self.x2)), int(np.ceil(self.y2))
        return slice(max(y1, 0), y2), slice(max(x1, 0), x2)

    @classmethod
    def from_center(cls, cx: float, cy: float, w: float, h: float) -> "BoundingBox":
        return cls(cx - w / 2.0, cy - h / 2.0, w, h)


@dataclass
class Frame:
    index: int
    timestamp: float
    pixels: np.ndarray  # (H, W, 3), floats in [0, 1]

    def __post_init__(self):
        px = self.pixels
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"frame pixels must be HxWx3, got {px.shape}")
        if px.shape[0] < 32 or px.shape[1] < 32:
            raise ValueError(f"frame must be at least 32x32, got {px.shape[:2]}")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def crop(self, box: BoundingBox) -> np.ndarray:
        rows, cols = box.slices()
        return self.pixels[rows, cols]


@dataclass(frozen=True)
class RegionTruth:
    """Simulated ground truth visible to the oracle classifiers.

    ``visibility`` below one marks partial occlusion or shade; ``view`` is
    the scenario view-tag of the object.
    """

    category: str
    view: str = "ground"
    visibility: float = 1.0


@dataclass
class Region:
    """A frame crop handed to a bottom-up classifier."""

    pixels: np.ndarray
    box: BoundingBox
    frame_index: int = 0
    truth: Optional[RegionTruth] = None

    @property
    def key(self) -> tuple:
        """Stable identity used to seed per-region classifier noise."""
        return (self.frame_index, int(round(self.box.x)), int(round(self.box.y)),
                int(round(self.box.w)), int(round(self.box.h)))


@dataclass
class Detection:
    box: BoundingBox
    probs: np.ndarray
    frame_index: int

    def __post_init__(self):
        self.probs = check_probs(self.probs)


@dataclass(frozen=True)
class ScenePrediction:
    scene_id: int
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"scene confidence must lie in [0, 1], got {self.confidence}")


class BottomUpClassifier(Protocol):
    """Anything that maps an image region to per-category confidences."""

    min_size: int

    def classify(self, region: Region) -> np.ndarray: ...


class SceneClassifier(Protocol):
    def classify_scene(self, frame: Frame, true_scene: Optional[int] = None) -> ScenePrediction: ...


@dataclass
class GistPrediction:
    kind: Kind
    confidence: float
    features: Optional[np.ndarray] = field(default=None, repr=False)

    def agreement(self, catalog: CategoryCatalog) -> np.ndarray:
        """Per-category probability implied by the man-made/natural call."""
        match = catalog.kind_mask(self.kind)
        return np.where(match, self.confidence, 1.0 - self.confidence)
