"""Run artifacts: CSV tables, context matrices and the model dump.

Floats are written with a fixed ``%.6f`` format and a decimal point
regardless of locale, so identical runs give byte-identical files.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import CategoryCatalog
from .evaluation import category_scores, cumulative_error, error_rate, mean_average_precision
from .pipeline import RunResult

RUN_FILES = ("detections.csv", "tracks.csv", "cumulative_error.csv", "metrics.csv", "map.csv",
             "refinements.csv", "summary.csv", "so.csv", "oo.csv", "context.json", "model.json")

ABLATIONS = {
    "bottom_up": dict(scene_pathway=False, gist_pathway=False, object_files=False, reinforcement=False),
    "context": dict(scene_pathway=True, gist_pathway=True, object_files=False, reinforcement=False),
    "object_files": dict(scene_pathway=True, gist_pathway=True, object_files=True, reinforcement=False),
    "full": dict(scene_pathway=True, gist_pathway=True, object_files=True, reinforcement=True),
}


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        return "%.6f" % x
    return str(x)


def write_csv(path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def _name(catalog: CategoryCatalog, idx: Optional[int]) -> Optional[str]:
    return None if idx is None else catalog.names[idx]


def detection_rows(result: RunResult, names: Sequence[str]):
    cat = result.catalog
    for fr in result.frames:
        for k, p in enumerate(fr.proposals):
            bu = int(np.argmax(p.probs_bu)) if len(p.probs_bu) else None
            f = p.fused
            yield (fr.clip, names[fr.clip], fr.frame_index, k, p.source.name.lower(), p.box.x, p.box.y, p.box.w, p.box.h,
                   None if p.truth is None else p.truth.category, _name(cat, bu),
                   None if bu is None else float(p.probs_bu[bu]),
                   None if p.gist is None else p.gist.kind.value, None if p.gist is None else p.gist.confidence,
                   _name(cat, f.label), f.confidence, p.file_id)


DETECTION_COLUMNS = ("clip", "scenario", "frame", "proposal", "source", "x", "y", "w", "h", "truth",
                     "bottom_up_label", "bottom_up_score", "gist_kind", "gist_confidence",
                     "fused_label", "fused_score", "file_id")
TRACK_COLUMNS = ("clip", "scenario", "frame", "file_id", "x", "y", "w", "h", "matched",
                 "confirmed", "stable_label", "stable_confidence")
ERROR_COLUMNS = ("instance", "clip", "frame", "object_id", "truth", "decision", "correct", "cumulative_error")
METRIC_COLUMNS = ("category", "support", "predicted", "true_positives", "precision", "recall", "f1")
REFINEMENT_COLUMNS = ("clip", "frame", "buffer_size", "pre_probe_accuracy", "post_probe_accuracy",
                      "pre_regression_accuracy", "post_regression_accuracy", "accepted")


def write_run(result: RunResult, out_dir, scenario_names: Sequence[str]) -> dict:
    """Write every run artifact into ``out_dir``; returns the summary values."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cat = result.catalog
    names = list(scenario_names)

    write_csv(out / "detections.csv", DETECTION_COLUMNS, detection_rows(result, names))
    write_csv(out / "tracks.csv", TRACK_COLUMNS, (
        (fr.clip, names[fr.clip], fr.frame_index, t.file_id, t.box.x, t.box.y, t.box.w, t.box.h, t.included,
         t.confirmed, _name(cat, t.stable_label), t.stable_confidence)
        for fr in result.frames for t in fr.tracks))

    instances = result.instances
    clip_of = [fr.clip for fr in result.frames for _ in fr.instances]
    ce = cumulative_error(instances)
    write_csv(out / "cumulative_error.csv", ERROR_COLUMNS, (
        (k, clip_of[k], i.frame_index, i.object_id, _name(cat, i.truth), _name(cat, i.decision), i.correct, ce[k])
        for k, i in enumerate(instances)))

    write_csv(out / "metrics.csv", METRIC_COLUMNS, (
        (cat.names[s.category], s.support, s.predicted, s.true_positives, s.precision, s.recall, s.f1)
        for s in category_scores(instances, len(cat))))

    m, per = mean_average_precision(instances, len(cat))
    rows = [(cat.names[c], ap) for c, ap in sorted(per.items())] + [("mean", m)]
    write_csv(out / "map.csv", ("category", "average_precision"), rows)

    write_csv(out / "refinements.csv", REFINEMENT_COLUMNS, (
        (clip, e.frame_index, e.buffer_size, e.pre_probe_accuracy, e.post_probe_accuracy,
         e.pre_regression_accuracy, e.post_regression_accuracy, e.accepted)
        for clip, e in result.refinements))

    summary = {
        "clips": len(names),
        "frames": len(result.frames),
        "instances": len(instances),
        "error_rate": error_rate(instances),
        "final_cumulative_error": float(ce[-1]) if len(ce) else 0.0,
        "map": m,
        "refinements": len(result.refinements),
        "accepted_refinements": sum(e.accepted for _, e in result.refinements),
    }
    write_csv(out / "summary.csv", ("key", "value"), summary.items())

    ctx = result.context
    if ctx is not None:
        ctx.save(out / "context.json")
        so = ctx.so.normalized()
        write_csv(out / "so.csv", ("scene",) + tuple(cat.names),
                  ((s,) + tuple(so[i]) for i, s in enumerate(ctx.scenes.names)))
        oo = ctx.oo.normalized()
        write_csv(out / "oo.csv", ("category",) + tuple(cat.names),
                  ((c,) + tuple(oo[i]) for i, c in enumerate(cat.names)))

    model = {
        "format": "vap-models",
        "version": 1,
        "bottom_up": None if result.classifier is None else result.classifier.ensemble.to_dict(cat.names),
        "gist": None if result.gist is None else result.gist.model.to_dict(),
    }
    with open(out / "model.json", "w") as fh:
        json.dump(model, fh)
    return summary


def write_ablation(curves: dict[str, RunResult], out_dir) -> None:
    """Joined cumulative-error table, one column per configuration.

    Every configuration sees the same instances (ground-truth objects per
    frame), so rows line up by index.
    """
    names = list(curves)
    series = [cumulative_error(curves[n].instances) for n in names]
    lengths = {len(s) for s in series}
    if len(lengths) > 1:
        raise RuntimeError(f"ablation runs disagree on the instance count: {sorted(lengths)}")
    n = lengths.pop() if lengths else 0
    write_csv(Path(out_dir) / "ablation.csv", ("instance",) + tuple(names),
              ((k,) + tuple(s[k] for s in series) for k in range(n)))
    write_csv(Path(out_dir) / "ablation_summary.csv", ("configuration", "instances", "error_rate", "map"),
              ((name, len(curves[name].instances), error_rate(curves[name].instances),
                mean_average_precision(curves[name].instances, len(curves[name].catalog))[0])
               for name in names))
