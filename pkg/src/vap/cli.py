"""Command-line entry points.

``vap run``       process scenarios and write the run artifacts
``vap ablate``    the same scenarios under bottom-up / +context / +object-files / full
``vap generate``  write one of the built-in scenario suites as JSON
``vap bootstrap`` tally a context file from a scenario suite's ground truth
``vap render``    write a scenario's frames as PPM images

Exit status: 0 on success, 2 for unreadable or invalid inputs, 1 when the
run itself fails.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import suites
from .config import ConfigError, PipelineConfig, load_config
from .pipeline import StageError, run
from .ppm import write_ppm
from .report import ABLATIONS, write_ablation, write_run
from .scenario import ScenarioError, bootstrap_context, iter_render, load_scenarios, save_scenarios

log = logging.getLogger("vap")

LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}

SUITES = {
    "ambiguity": lambda seed: suites.ambiguity_suite(seed),
    "ambiguity-bootstrap": lambda seed: suites.ambiguity_bootstrap_suite(seed + 1),
    "viewpoint": lambda seed: suites.viewpoint_suite(seed),
    "street-bootstrap": lambda seed: suites.street_bootstrap_suite(seed),
    "occlusion": lambda seed: [suites.occlusion_scenario(seed)],
    "single": lambda seed: [suites.single_object(seed=seed)],
    "static": lambda seed: [suites.static_scene(seed=seed)],
    "co-appearance": lambda seed: suites.co_appearance_suite(seed),
}


class UsageError(Exception):
    """Bad or unreadable input; exit status 2."""


def setup_logging() -> None:
    name = os.environ.get("VAP_LOG_LEVEL", "warn").strip().lower()
    level = LOG_LEVELS.get(name)
    logging.basicConfig(level=level or logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if level is None:
        log.warning("unknown VAP_LOG_LEVEL %r, using 'warn'", name)


def _existing(path: Optional[str], what: str) -> Optional[Path]:
    if path is None:
        return None
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} file not found: {p}")
    return p


def _load_inputs(args) -> tuple[PipelineConfig, list]:
    scen_path = _existing(args.scenario, "scenario")
    cfg_path = _existing(args.config, "config")
    try:
        cfg = load_config(cfg_path) if cfg_path else PipelineConfig()
    except (ConfigError, OSError) as exc:
        raise UsageError(f"{cfg_path}: {exc}") from exc
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    try:
        specs = load_scenarios(scen_path)
    except (ScenarioError, ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"{scen_path}: {exc}") from exc
    if cfg.bootstrap_path() is not None and not cfg.bootstrap_path().is_file():
        raise UsageError(f"context bootstrap file not found: {cfg.bootstrap_path()}")
    return cfg, specs


def _print_summary(label: str, summary: dict) -> None:
    print(f"{label}: {summary['instances']} instances, error rate {summary['error_rate']:.4f}, "
          f"mAP {summary['map']:.4f}, refinements {summary['accepted_refinements']}/{summary['refinements']}")


def cmd_run(args) -> int:
    cfg, specs = _load_inputs(args)
    result = run(cfg, specs)
    summary = write_run(result, args.out, [s.name for s in specs])
    _print_summary(str(args.out), summary)
    return 0


def parse_ablate_set(text: Optional[str]) -> list[str]:
    if text is None:
        return list(ABLATIONS)
    names = [t.strip().replace("-", "_") for t in text.split(",") if t.strip()]
    bad = [n for n in names if n not in ABLATIONS]
    if bad or not names:
        raise UsageError(f"--ablate-set must list configurations from {', '.join(ABLATIONS)}")
    return [n for n in ABLATIONS if n in names]


def cmd_ablate(args) -> int:
    names = parse_ablate_set(args.ablate_set)
    cfg, specs = _load_inputs(args)
    out = Path(args.out)
    results = {}
    for name in names:
        res = run(cfg.with_stages(**ABLATIONS[name]), specs)
        summary = write_run(res, out / name, [s.name for s in specs])
        _print_summary(name, summary)
        results[name] = res
    write_ablation(results, out)
    return 0


def cmd_generate(args) -> int:
    specs = SUITES[args.suite](args.seed if args.seed is not None else 0)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_scenarios(args.out, specs, name=args.suite)
    print(f"wrote {len(specs)} scenario(s) to {args.out}")
    return 0


def cmd_bootstrap(args) -> int:
    path = _existing(args.scenario, "scenario")
    try:
        specs = load_scenarios(path)
        ctx = bootstrap_context(specs, weight=args.weight, smoothing=args.smoothing)
    except (ScenarioError, ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"{path}: {exc}") from exc
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    ctx.save(args.out)
    print(f"wrote context for scenes {', '.join(ctx.scenes.names)} to {args.out}")
    return 0


def cmd_render(args) -> int:
    path = _existing(args.scenario, "scenario")
    try:
        specs = load_scenarios(path)
    except (ScenarioError, ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"{path}: {exc}") from exc
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    truth_rows = []
    for k, spec in enumerate(specs):
        for frame, truth in iter_render(spec):
            write_ppm(out / f"{k:02d}_{frame.index:05d}.ppm", frame.pixels)
            truth_rows.append({"clip": k, "frame": truth.index, "scene": truth.scene,
                               "objects": [{"id": o.object_id, "category": o.category,
                                            "box": [o.box.x, o.box.y, o.box.w, o.box.h],
                                            "visibility": o.visibility} for o in truth.objects]})
    with open(out / "truth.json", "w") as fh:
        json.dump(truth_rows, fh, indent=1)
    print(f"wrote {len(truth_rows)} frame(s) to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vap", description="Contextual object recognition over synthetic video.")
    sub = parser.add_subparsers(dest="command", required=True)

    def run_args(p):
        p.add_argument("--config", help="JSON config file (defaults apply when omitted)")
        p.add_argument("--scenario", required=True, help="scenario or suite JSON file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, help="overrides the config seed")

    p = sub.add_parser("run", help="process scenarios and write run artifacts")
    run_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ablate", help="run the four ablation configurations")
    run_args(p)
    p.add_argument("--ablate-set", help=f"comma-separated subset of {','.join(ABLATIONS)}")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("generate", help="write a built-in scenario suite")
    p.add_argument("suite", choices=sorted(SUITES))
    p.add_argument("--out", required=True, help="output JSON file")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("bootstrap", help="tally a context file from a suite's ground truth")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True, help="output context JSON file")
    p.add_argument("--weight", type=float, default=1.0, help="count added per appearance")
    p.add_argument("--smoothing", type=float, default=1.0)
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("render", help="write frames as PPM plus truth.json")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging()
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"vap: error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"vap: run failed at {exc}", file=sys.stderr)
        return 1
    except (OSError, RuntimeError, ValueError) as exc:
        print(f"vap: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
