"""Run configuration: one JSON document with a section per module.

Every key is optional; unknown keys and invalid values are rejected with a
message naming the offending key (``section.key``).
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .attention import AttentionConfig
from .itc import FusionParams
from .objectfile import ObjectFileConfig
from .reinforce import ReinforceConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GistConfig:
    frequencies: tuple[float, ...] = (0.02, 0.08, 0.32)
    orientations: tuple[int, ...] = (8, 8, 4)
    pad: int = 32
    kernel: str = "linear"
    gamma: float = 1.0
    C: float = 1.0
    train_per_category: int = 8
    calib_per_category: int = 4

    def __post_init__(self):
        if len(self.frequencies) != len(self.orientations):
            raise ValueError("gist.frequencies and gist.orientations must have equal length")
        if any(f <= 0 or f >= 0.5 for f in self.frequencies):
            raise ValueError("gist.frequencies must lie in (0, 0.5) cycles/pixel")
        if any(n < 1 for n in self.orientations):
            raise ValueError("gist.orientations must be positive")
        if self.kernel not in ("linear", "rbf"):
            raise ValueError("gist.kernel must be 'linear' or 'rbf'")
        if not self.C > 0:
            raise ValueError("gist.C must be positive")
        if self.train_per_category < 1:
            raise ValueError("gist.train_per_category must be at least 1")


@dataclass(frozen=True)
class SvmConfig:
    """Training settings of the feature-stub bottom-up classifier."""

    kernel: str = "linear"
    gamma: float = 0.1
    C: float = 1.0
    tol: float = 1e-3
    train_per_category: int = 40
    calib_per_category: int = 20
    regression_per_category: int = 20
    crop_margin: float = 0.25  # loose backdrop around training crops, like real proposal boxes

    def __post_init__(self):
        if self.kernel not in ("linear", "rbf"):
            raise ValueError("svm.kernel must be 'linear' or 'rbf'")
        if not (self.C > 0 and self.tol > 0 and self.gamma > 0):
            raise ValueError("svm.C, svm.tol and svm.gamma must be positive")
        if self.train_per_category < 2:
            raise ValueError("svm.train_per_category must be at least 2")
        if not 0 <= self.crop_margin <= 1:
            raise ValueError("svm.crop_margin must lie in [0, 1]")


@dataclass(frozen=True)
class ContextConfig:
    smoothing: float = 1.0
    alpha_mix: float = 0.7
    bootstrap: Optional[str] = None  # path of a context file, relative to the config file

    def __post_init__(self):
        if not self.smoothing > 0:
            raise ValueError("context.smoothing must be positive")
        if not 0 <= self.alpha_mix <= 1:
            raise ValueError("context.alpha_mix must lie in [0, 1]")


@dataclass(frozen=True)
class ClassifierConfig:
    bottom_up: str = "confusable"  # oracle | confusable | feature_stub
    oracle_confidence: float = 1.0
    categories: Optional[tuple[str, ...]] = None  # feature-stub classes; default: those in the scenarios
    scene_flip_rate: float = 0.0
    scene_confidence: float = 1.0
    saliency: str = "ground_truth"  # ground_truth | local_contrast | none
    saliency_jitter: float = 0.1

    def __post_init__(self):
        if self.bottom_up not in ("oracle", "confusable", "feature_stub"):
            raise ValueError("classifiers.bottom_up must be 'oracle', 'confusable' or 'feature_stub'")
        if self.saliency not in ("ground_truth", "local_contrast", "none"):
            raise ValueError("classifiers.saliency must be 'ground_truth', 'local_contrast' or 'none'")
        if not 0 <= self.scene_flip_rate <= 1:
            raise ValueError("classifiers.scene_flip_rate must lie in [0, 1]")
        if not 0 <= self.scene_confidence <= 1:
            raise ValueError("classifiers.scene_confidence must lie in [0, 1]")
        if not 0 <= self.oracle_confidence <= 1:
            raise ValueError("classifiers.oracle_confidence must lie in [0, 1]")


@dataclass(frozen=True)
class StageConfig:
    """Which stages run, and how proposals are matched to ground truth."""

    scene_pathway: bool = True
    gist_pathway: bool = True
    object_files: bool = True
    reinforcement: bool = True
    hold_margin: int = 2
    truth_iou: float = 0.5
    instance_iou: float = 0.3

    def __post_init__(self):
        if not 0 < self.truth_iou <= 1:
            raise ValueError("pipeline.truth_iou must lie in (0, 1]")
        if not 0 < self.instance_iou <= 1:
            raise ValueError("pipeline.instance_iou must lie in (0, 1]")
        if self.hold_margin < 0:
            raise ValueError("pipeline.hold_margin must be non-negative")


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    attention: AttentionConfig = field(default_factory=AttentionConfig)
    gist: GistConfig = field(default_factory=GistConfig)
    svm: SvmConfig = field(default_factory=SvmConfig)
    context: ContextConfig = field(default_factory=ContextConfig)
    itc: FusionParams = field(default_factory=FusionParams)
    objectfile: ObjectFileConfig = field(default_factory=ObjectFileConfig)
    reinforce: ReinforceConfig = field(default_factory=ReinforceConfig)
    pipeline: StageConfig = field(default_factory=StageConfig)
    classifiers: ClassifierConfig = field(default_factory=ClassifierConfig)
    base_dir: Optional[str] = None  # directory relative paths resolve against

    def with_stages(self, **flags) -> "PipelineConfig":
        return dataclasses.replace(self, pipeline=dataclasses.replace(self.pipeline, **flags))

    def bootstrap_path(self) -> Optional[Path]:
        if self.context.bootstrap is None:
            return None
        p = Path(self.context.bootstrap)
        return p if p.is_absolute() or self.base_dir is None else Path(self.base_dir) / p

    def to_dict(self) -> dict:
        out = {"seed": self.seed}
        for f in dataclasses.fields(self):
            if f.name in ("seed", "base_dir"):
                continue
            out[f.name] = _jsonable(dataclasses.asdict(getattr(self, f.name)))
        return out


SECTIONS = {
    "attention": AttentionConfig,
    "gist": GistConfig,
    "svm": SvmConfig,
    "context": ContextConfig,
    "itc": FusionParams,
    "objectfile": ObjectFileConfig,
    "reinforce": ReinforceConfig,
    "pipeline": StageConfig,
    "classifiers": ClassifierConfig,
}


def _jsonable(d: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def _coerce(section: str, cls, values: dict):
    if not isinstance(values, dict):
        raise ConfigError(f"config section {section!r} must be an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in values.items():
        if key not in fields:
            raise ConfigError(f"unknown config key '{section}.{key}'")
        default = fields[key].default
        if isinstance(value, list):
            value = tuple(value)
        if isinstance(default, bool) and not isinstance(value, bool):
            raise ConfigError(f"config key '{section}.{key}' must be true or false")
        if isinstance(default, (int, float)) and not isinstance(default, bool):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"config key '{section}.{key}' must be a number")
            if isinstance(default, int) and not isinstance(default, bool) and value != int(value):
                raise ConfigError(f"config key '{section}.{key}' must be an integer")
            value = type(default)(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config section '{section}': {exc}") from exc


def config_from_dict(d: dict, base_dir: Optional[str] = None) -> PipelineConfig:
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    kwargs = {"base_dir": base_dir}
    for key, value in d.items():
        if key == "seed":
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError("config key 'seed' must be an integer")
            kwargs["seed"] = value
        elif key in SECTIONS:
            kwargs[key] = _coerce(key, SECTIONS[key], value)
        else:
            raise ConfigError(f"unknown config key '{key}'")
    return PipelineConfig(**kwargs)


def load_config(path) -> PipelineConfig:
    path = Path(path)
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return config_from_dict(d, str(path.parent))
