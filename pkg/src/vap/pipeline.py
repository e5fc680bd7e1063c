"""Per-frame orchestration: attention, classification, fusion, object-files, refinement.

:class:`Pipeline` holds the state that persists across clips (context
matrices, the bottom-up classifier, the refinement buffer) and the state
that is reset at every clip (background model, frame window, tracker, idle
detector). :func:`run` processes a list of scenarios in order.
"""
from __future__ import annotations

import contextlib
import logging
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Optional, Sequence

import numpy as np

from .attention import (BackgroundModel, GroundTruthProposer, LocalContrastProposer, Source,
                        boxes_mask, detect_motion, merge_proposals, random_saccades, update_background)
from .classifiers import ConfusablePairOracle, FeatureStubClassifier, SceneStub, ZeroNoiseOracle, handcrafted_features
from .config import PipelineConfig
from .context import ContextState
from .core import (BoundingBox, CategoryCatalog, DegenerateInputError, Detection, Frame, GistPrediction,
                   Region, RegionTruth, SceneCatalog, ScenePrediction)
from .evaluation import Instance
from .gist import GistClassifier, build_gabor_bank
from .itc import FusedDecision, fuse
from .objectfile import ObjectFileTracker, ingest_observation, snapshot, stable_decision
from .reinforce import IdleDetector, RefinementEvent, harvest, maybe_refine
from .scenario import FrameTruth, ScenarioSpec, iter_render, training_crops
from .svm import KernelSpec, TrainingBuffer

log = logging.getLogger(__name__)


class StageError(RuntimeError):
    """A module failure, tagged with the frame and pipeline stage it occurred in."""

    def __init__(self, frame_index: int, stage: str, cause: Exception):
        super().__init__(f"frame {frame_index}, stage '{stage}': {cause}")
        self.frame_index = frame_index
        self.stage = stage


@contextlib.contextmanager
def _stage(frame_index: int, name: str):
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(frame_index, name, exc) from exc


@dataclass
class ProposalResult:
    box: BoundingBox
    source: Source
    truth: Optional[RegionTruth]
    probs_bu: np.ndarray
    gist: Optional[GistPrediction]
    fused: FusedDecision
    feature: Optional[np.ndarray] = None
    file_id: Optional[int] = None


@dataclass(frozen=True)
class TrackRecord:
    file_id: int
    box: BoundingBox
    stable_label: Optional[int]
    stable_confidence: float
    included: bool
    confirmed: bool


@dataclass
class FrameResult:
    clip: int
    frame_index: int
    true_scene: str
    scene: Optional[ScenePrediction]
    proposals: list[ProposalResult]
    assignments: dict[int, int]
    tracks: list[TrackRecord]
    instances: list[Instance]
    refinement: Optional[RefinementEvent] = None


# ------------------------------------------------------------ model building

@lru_cache(maxsize=8)
def build_gist_classifier(cfg, catalog: CategoryCatalog, seed: int) -> GistClassifier:
    """Man-made/natural classifier trained on rendered crops of every category."""
    bank = build_gabor_bank(cfg.frequencies, cfg.orientations, cfg.pad)
    names = catalog.names
    crops, labels = training_crops(catalog, names, cfg.train_per_category, seed + 101)
    kinds = [catalog[catalog.index(n)].kind for n in labels]
    calib = ccalib = None
    if cfg.calib_per_category > 0:
        calib, clab = training_crops(catalog, names, cfg.calib_per_category, seed + 202)
        ccalib = [catalog[catalog.index(n)].kind for n in clab]
    return GistClassifier.fit(crops, kinds, bank, KernelSpec(cfg.kernel, cfg.gamma), cfg.C, calib, ccalib)


@lru_cache(maxsize=8)
def build_feature_stub(cfg, catalog: CategoryCatalog, categories: tuple[str, ...],
                       seed: int) -> tuple[FeatureStubClassifier, tuple[np.ndarray, np.ndarray]]:
    """Feature-stub classifier plus a frozen regression set, both from ground-view renders."""
    crops, labels = training_crops(catalog, categories, cfg.train_per_category, seed + 303, margin=cfg.crop_margin)
    ccrops, clabels = training_crops(catalog, categories, cfg.calib_per_category, seed + 404, margin=cfg.crop_margin)
    stub = FeatureStubClassifier.fit(catalog, crops, labels, KernelSpec(cfg.kernel, cfg.gamma), cfg.C,
                                     ccrops, clabels)
    rcrops, rlabels = training_crops(catalog, categories, cfg.regression_per_category, seed + 505, margin=cfg.crop_margin)
    X = np.array([handcrafted_features(c) for c in rcrops])
    y = np.array([catalog.index(n) for n in rlabels])
    return stub, (X, y)


def scene_catalog_for(specs: Sequence[ScenarioSpec], context: Optional[ContextState] = None) -> SceneCatalog:
    names: list[str] = list(context.scenes.names) if context is not None else []
    for s in specs:
        for n in s.scenes:
            if n not in names:
                if context is not None:
                    raise ValueError(f"scene {n!r} of scenario {s.name!r} is not in the context file")
                names.append(n)
    return SceneCatalog(names or ["default"])


# ----------------------------------------------------------------- pipeline

class Pipeline:
    """Stateful frame processor.

    Parameters
    ----------
    config : PipelineConfig
    scenes : SceneCatalog
        Scene names the scene classifier can report.
    catalog : CategoryCatalog, optional
        Defaults to the 25-category catalog.
    context : ContextState, optional
        Initial SO/OO counts; empty (uniform after smoothing) by default.
    bottom_up : FeatureStubClassifier, optional
        Trained feature stub, used when ``classifiers.bottom_up`` is
        ``feature_stub``; built from renders of ``stub_categories`` if absent.
    regression : (X, y), optional
        Frozen original-distribution features for the refinement guard.
    """

    def __init__(self, config: PipelineConfig, scenes: SceneCatalog, catalog: Optional[CategoryCatalog] = None,
                 context: Optional[ContextState] = None, bottom_up: Optional[FeatureStubClassifier] = None,
                 regression: Optional[tuple[np.ndarray, np.ndarray]] = None,
                 stub_categories: Sequence[str] = ()):
        self.config = config
        self.catalog = catalog or CategoryCatalog.default()
        self.scenes = scenes
        cc = config.context
        if context is None:
            context = ContextState.empty(scenes, self.catalog, cc.smoothing, cc.alpha_mix)
        elif context.categories != self.catalog:
            raise ValueError("context categories do not match the category catalog")
        context.alpha_mix = cc.alpha_mix
        self.context = context
        cls = config.classifiers
        self.stub: Optional[FeatureStubClassifier] = None
        self.regression = regression
        if cls.bottom_up == "feature_stub":
            if bottom_up is None:
                cats = tuple(cls.categories or stub_categories)
                if len(cats) < 2:
                    raise ValueError("the feature stub needs at least two categories")
                bottom_up, reg = build_feature_stub(config.svm, self.catalog, cats, config.seed)
                self.regression = self.regression if self.regression is not None else reg
            self.stub = bottom_up
        self.gist = None
        if config.pipeline.gist_pathway:
            self.gist = build_gist_classifier(config.gist, self.catalog, config.seed)
        self.scene_classifier = SceneStub(len(scenes), cls.scene_flip_rate, cls.scene_confidence, config.seed)
        if cls.saliency == "ground_truth":
            self.saliency = GroundTruthProposer(cls.saliency_jitter)
        elif cls.saliency == "local_contrast":
            self.saliency = LocalContrastProposer()
        else:
            self.saliency = None
        self.buffer = TrainingBuffer(config.reinforce.buffer_capacity)
        self.refinements: list[tuple[int, RefinementEvent]] = []
        self.clip = -1
        self.spec: Optional[ScenarioSpec] = None

    # -- clip lifecycle

    def start_clip(self, spec: ScenarioSpec) -> None:
        self.clip += 1
        self.spec = spec
        cls = self.config.classifiers
        if cls.bottom_up == "oracle":
            self.bottom_up = ZeroNoiseOracle(self.catalog, cls.oracle_confidence)
        elif cls.bottom_up == "confusable":
            inj = spec.injections
            self.bottom_up = ConfusablePairOracle(self.catalog, inj.pairs, inj.ambiguity, inj.noise,
                                                  dict(inj.view_ambiguity), seed=self.config.seed)
        else:
            self.bottom_up = self.stub
        self.background: Optional[BackgroundModel] = None
        self.window: deque[Frame] = deque(maxlen=5)
        self.tracker = ObjectFileTracker(self.config.objectfile)
        self.idle = IdleDetector(self.config.reinforce.idle_window)
        self.last_index: Optional[int] = None

    @property
    def classifier_model(self):
        return None if self.stub is None else self.stub.ensemble

    # -- one frame

    def process_frame(self, frame: Frame, truth: FrameTruth) -> FrameResult:
        if self.spec is None:
            raise RuntimeError("start_clip must be called before process_frame")
        if self.last_index is not None and frame.index != self.last_index + 1:
            raise ValueError(f"expected frame {self.last_index + 1}, got {frame.index}")
        self.last_index = frame.index
        cfg = self.config
        att = cfg.attention
        stages = cfg.pipeline
        t = frame.index

        with _stage(t, "attention"):
            if self.background is None:
                self.background = BackgroundModel.from_frame(frame, att.alpha_bg, att.k_bg, att.init_variance)
            self.window.append(frame)
            motion = detect_motion(self.background, self.window, att.tau_diff, att.min_area)
            hold = boxes_mask(frame.pixels.shape[:2], motion, stages.hold_margin) if motion else None
            self.background = update_background(self.background, frame, hold)
            rng = np.random.default_rng([cfg.seed & 0xFFFFFFFF, self.clip, t])
            truth_boxes = [o.box for o in truth.objects]
            saliency = self.saliency.propose(frame, truth_boxes, rng) if self.saliency is not None else []
            saccades = random_saccades((frame.width, frame.height), motion, saliency, rng, att.n_saccade,
                                       att.saccade_size, att.saccade_retries)
            proposals = merge_proposals(motion, saliency, saccades, att.iou_threshold, att.max_proposals)

        scene_pred = None
        with _stage(t, "scene"):
            if stages.scene_pathway:
                scene_pred = self.scene_classifier.classify_scene(frame, self.scenes.index(truth.scene))
                present = [f.confirmed_label for f in self.tracker.files.values()
                           if f.confirmed_label is not None and f.confirmed]
                prior = self.context.prior(scene_pred, present)

        results: list[ProposalResult] = []
        for p in proposals:
            with _stage(t, "classify"):
                region = Region(frame.crop(p.box), p.box, t, self._region_truth(p.box, truth))
                try:
                    probs = self.bottom_up.classify(region)
                except DegenerateInputError:
                    continue
                feature = self.stub.features(region) if self.bottom_up is self.stub else None
            with _stage(t, "gist"):
                gist = self.gist.predict(region.pixels) if self.gist is not None else None
            with _stage(t, "fuse"):
                fused = fuse(probs, (scene_pred, prior) if scene_pred is not None else None, gist,
                             cfg.itc, self.catalog)
            results.append(ProposalResult(p.box, p.source, region.truth, probs, gist, fused, feature))

        assignments: dict[int, int] = {}
        tracks: list[TrackRecord] = []
        if stages.object_files:
            with _stage(t, "objectfile"):
                motion_idx = [k for k, r in enumerate(results) if r.source is Source.MOTION]
                matched = self.tracker.step([results[k].box for k in motion_idx])
                for j, fid in matched.items():
                    k = motion_idx[j]
                    r = results[k]
                    r.file_id = fid
                    assignments[k] = fid
                    f = self.tracker.files[fid]
                    ingest_observation(f, Detection(r.box, r.fused.corrected, t), r.feature,
                                       tiebreak=r.probs_bu)
                for f in self.tracker.files.values():
                    if f.box is None or not f.observations:
                        continue
                    tracks.append(TrackRecord(f.file_id, f.box, f.stable_label, f.stable_confidence,
                                              f.observations[-1].included and f.observations[-1].frame_index == t,
                                              f.confirmed))
            if stages.scene_pathway:
                with _stage(t, "context"):
                    self._update_context(scene_pred)

        event = None
        if stages.reinforcement and stages.object_files and self.stub is not None:
            with _stage(t, "reinforce"):
                event = self._reinforce(results, t, n_motion=len(proposals.boxes(Source.MOTION)))

        with _stage(t, "evaluate"):
            instances = self._instances(results, truth)
        return FrameResult(self.clip, t, truth.scene, scene_pred, results, assignments, tracks, instances, event)

    # -- helpers

    def _region_truth(self, box: BoundingBox, truth: FrameTruth) -> Optional[RegionTruth]:
        best, best_iou = None, self.config.pipeline.truth_iou
        for o in truth.objects:
            iou = box.iou(o.box)
            if iou >= best_iou and (best is None or iou > best_iou):
                best, best_iou = o, iou
        if best is None:
            return None
        return RegionTruth(best.category, best.view, best.visibility)

    def _update_context(self, scene_pred: Optional[ScenePrediction]) -> None:
        if scene_pred is None:
            return
        live = list(self.tracker.files.values())
        for f in live:
            if not f.confirmed or f.confirmed_label == f.stable_label:
                continue
            partners = [g.confirmed_label for g in live if g is not f and g.confirmed_label is not None]
            self.context.update(scene_pred.scene_id, [f.stable_label], partners)
            f.confirmed_label = f.stable_label

    def _reinforce(self, results: list[ProposalResult], t: int, n_motion: int) -> Optional[RefinementEvent]:
        rc = self.config.reinforce
        ensemble = self.stub.ensemble
        for r in results:
            if r.file_id is None or r.file_id not in self.tracker.files:
                continue
            sample = harvest(snapshot(self.tracker.files[r.file_id]), r.fused.label, r.feature, ensemble,
                             rc.m_near, t)
            if sample is not None:
                self.buffer.add(sample.feature, sample.pseudo_label)
        self.idle.observe(n_motion)
        new, event = maybe_refine(self.buffer, self.idle, ensemble, rc, self.regression, t)
        if event is not None:
            self.refinements.append((self.clip, event))
            if event.accepted:
                self.stub = self.stub.with_ensemble(new)
                self.bottom_up = self.stub
        return event

    def _instances(self, results: list[ProposalResult], truth: FrameTruth) -> list[Instance]:
        thr = self.config.itc.decision_threshold
        use_files = self.config.pipeline.object_files
        n = len(self.catalog)
        out = []
        for o in truth.objects:
            best, best_iou = None, self.config.pipeline.instance_iou
            for r in results:
                iou = r.box.iou(o.box)
                if iou >= best_iou and (best is None or iou > best_iou):
                    best, best_iou = r, iou
            if best is None:
                decision, scores = None, np.zeros(n)
            elif use_files and best.file_id is not None and best.file_id in self.tracker.files:
                f = self.tracker.files[best.file_id]
                label, conf = stable_decision(f)
                decision = label if label is not None and conf >= thr else None
                scores = f.stable_probs if f.stable_probs is not None else np.zeros(n)
            else:
                decision, scores = best.fused.label, best.fused.corrected
            out.append(Instance(truth.index, o.object_id, self.catalog.index(o.category), decision,
                                np.asarray(scores, dtype=float)))
        return out

    def run_clip(self, spec: ScenarioSpec) -> Iterable[FrameResult]:
        self.start_clip(spec)
        for frame, truth in iter_render(spec, self.catalog):
            yield self.process_frame(frame, truth)


# --------------------------------------------------------------------- run

@dataclass
class RunResult:
    config: PipelineConfig
    catalog: CategoryCatalog
    frames: list[FrameResult] = field(default_factory=list)
    context: Optional[ContextState] = None
    classifier: Optional[FeatureStubClassifier] = None
    gist: Optional[GistClassifier] = None
    refinements: list[tuple[int, RefinementEvent]] = field(default_factory=list)
    regression: Optional[tuple[np.ndarray, np.ndarray]] = None
    initial_classifier: Optional[FeatureStubClassifier] = None

    @property
    def instances(self) -> list[Instance]:
        return [i for fr in self.frames for i in fr.instances]


def stub_categories_for(specs: Sequence[ScenarioSpec], catalog: CategoryCatalog) -> tuple[str, ...]:
    seen = {o.category for s in specs for o in s.objects}
    return tuple(n for n in catalog.names if n in seen)


def run(config: PipelineConfig, specs: Sequence[ScenarioSpec], context: Optional[ContextState] = None,
        catalog: Optional[CategoryCatalog] = None, bottom_up: Optional[FeatureStubClassifier] = None,
        regression: Optional[tuple[np.ndarray, np.ndarray]] = None) -> RunResult:
    """Process every frame of every scenario in order.

    ``context`` (copied, never mutated) overrides ``config.context.bootstrap``.
    """
    catalog = catalog or CategoryCatalog.default()
    if context is None and config.bootstrap_path() is not None:
        context = ContextState.load(config.bootstrap_path(), config.context.alpha_mix)
    elif context is not None:
        context = ContextState.from_dict(context.to_dict(), config.context.alpha_mix)
    scenes = scene_catalog_for(specs, context)
    pipe = Pipeline(config, scenes, catalog, context, bottom_up, regression, stub_categories_for(specs, catalog))
    result = RunResult(config, catalog, initial_classifier=pipe.stub, regression=pipe.regression)
    for spec in specs:
        result.frames.extend(pipe.run_clip(spec))
    result.context = pipe.context
    result.classifier = pipe.stub
    result.gist = pipe.gist
    result.refinements = pipe.refinements
    return result
