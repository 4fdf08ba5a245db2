"""
LodSim - Main Entry Point
Progressive level-of-detail elastodynamics on volumetric mesh hierarchies

Run: python main.py simulate --scene scenes/ball_on_spike.yaml --mode progressive --out runs/spike
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from config import settings
from models.errors import ConfigError, LodSimError
from models.grid import ProgressiveConfig
from models.prolongation import ProlongationKind
from models.scene import load_scene
from pipeline.binding import audit_binding, bind_naive_closest, bind_robust, save_binding
from pipeline.metrics import com_divergence, emit_traces, mean_divergence
from pipeline.progressive import run_direct_levels, run_embedded, run_progressive, run_tracks
from pipeline.prolongation import build_operator, export_matrix_market, norm_report
from pipeline.report import build_report
from pipeline.run_store import RunStore, file_sha256, load_grid, load_manifest
from pipeline.scene_builder import build_hierarchy, build_scene

logger = logging.getLogger(__name__)

MODES = ("direct-all-levels", "progressive", "tracks", "embedded")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


# ============================================================================
# Subcommands
# ============================================================================

def cmd_bind(args) -> int:
    scene = load_scene(args.scene)
    hierarchy = build_hierarchy(scene, args.levels)
    store = RunStore(args.out, "bind")
    store.record_scene(args.scene, scene)
    pairs = []
    for level in range(hierarchy.finest):
        coarse, fine = hierarchy[level], hierarchy[level + 1]
        entry = {"coarse": level, "fine": level + 1}
        robust = bind_robust(fine, coarse)
        save_binding(robust, Path(args.out) / "bindings" / f"level_{level}_to_{level + 1}.txt")
        entry["robust"] = {"summary": robust.summary(), "audit": audit_binding(fine, coarse, robust).to_dict()}
        if args.naive:
            naive = bind_naive_closest(fine, coarse)
            save_binding(naive, Path(args.out) / "bindings" / f"level_{level}_to_{level + 1}_naive.txt")
            entry["naive"] = {"summary": naive.summary(), "audit": audit_binding(fine, coarse, naive).to_dict()}
        pairs.append(entry)
        logger.info(f"Bound level {level + 1} into level {level}: "
                    f"{robust.n_extrapolated} extrapolated vertices")
    store.update(hierarchy=hierarchy.to_dict(), bindings=pairs)
    store.finish()
    print(json.dumps({"bindings": pairs}, indent=2, default=str))
    return EXIT_OK


def cmd_prolong(args) -> int:
    scene = load_scene(args.scene)
    hierarchy = build_hierarchy(scene, args.levels)
    config = ProgressiveConfig(h=scene.time.h, steps=scene.time.steps, kind=args.kind or scene.progressive.kind,
                               pair_kinds=None if args.kind else scene.progressive.pair_kinds)
    kinds = config.kinds(hierarchy.finest)
    store = RunStore(args.out, "prolong")
    store.record_scene(args.scene, scene)
    operators = []
    for level in range(hierarchy.finest):
        operator = build_operator(hierarchy[level + 1], hierarchy[level], kinds[level], scene.progressive.phong_blend)
        epsilon = hierarchy.stats[level].epsilon if hierarchy.stats else None
        operator.diagnostics = norm_report(operator, epsilon=epsilon)
        export_matrix_market(operator, Path(args.out) / "operators" / f"P_{level}_{level + 1}.mtx")
        operators.append({"coarse": level, "fine": level + 1, **operator.to_dict()})
    store.update(kinds=[k.value for k in kinds], operators=operators)
    store.finish()
    print(json.dumps({"operators": operators}, indent=2, default=str))
    return EXIT_OK


def cmd_simulate(args) -> int:
    scene = load_scene(args.scene)
    system = build_scene(scene, args.levels)
    if args.kind:
        system.config.kind = ProlongationKind.parse(args.kind)
        system.config.pair_kinds = None
    if args.w is not None:
        if args.w < 0:
            raise ConfigError(f"--w must be non-negative, got {args.w}")
        system.config.w = args.w

    store = RunStore(args.out, "simulate", args.mode)
    store.record_scene(args.scene, scene)
    store.update(max_levels=args.levels, kind=system.config.kind.value, w=system.config.w,
                 kinds=[k.value for k in system.config.kinds(system.n_levels - 1)])

    if args.mode == "progressive":
        grid = run_progressive(system)
    elif args.mode == "direct-all-levels":
        grid = run_direct_levels(system, args.workers or settings.workers)
    elif args.mode == "tracks":
        grid = run_tracks(system)
    else:
        grid = run_embedded(system)

    store.write_grid(grid, system.hierarchy)
    divergence = com_divergence(grid, [level.mass for level in system.levels])
    store.update(com_divergence={"per_level": divergence, "mean": mean_divergence(divergence)})
    if args.mode == "progressive":
        paths = emit_traces(grid, system.levels, system.operators() if system.n_levels > 1 else [],
                            Path(args.out) / "metrics")
        store.update(metrics={k: str(v) for k, v in paths.items()})
    store.finish()
    print(f"Run written to {args.out}")
    return EXIT_OK


def cmd_metrics(args) -> int:
    manifest = load_manifest(args.run)
    scene_path = Path(manifest["scene"]["path"])
    if not scene_path.exists():
        raise ConfigError(f"Scene of this run no longer exists: {scene_path}")
    if file_sha256(scene_path) != manifest["scene"]["sha256"]:
        logger.warning(f"Scene {scene_path} changed since the run was recorded")
    system = build_scene(load_scene(scene_path), manifest.get("max_levels"))
    if manifest.get("kind"):
        system.config.kind = ProlongationKind.parse(manifest["kind"])
        kinds = manifest.get("kinds")
        system.config.pair_kinds = [ProlongationKind.parse(k) for k in kinds] if kinds else None
    grid = load_grid(args.run)
    emit_traces(grid, system.levels, system.operators() if system.n_levels > 1 else [],
                Path(args.run) / "metrics")
    print(f"Metric traces written to {Path(args.run) / 'metrics'}")
    return EXIT_OK


def cmd_report(args) -> int:
    text, _ = build_report(args.run)
    print(text)
    return EXIT_OK


# ============================================================================
# Argument parsing
# ============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lodsim", description=__doc__.strip().splitlines()[1])
    sub = parser.add_subparsers(dest="command", required=True)

    def scene_args(p, out_required=True):
        p.add_argument("--scene", required=True, help="scene YAML file")
        p.add_argument("--out", required=out_required, help="output run directory")
        p.add_argument("--levels", type=int, default=None, help="use only the first N levels")

    p = sub.add_parser("bind", help="bind every level into the next coarser one")
    scene_args(p)
    p.add_argument("--naive", action="store_true", help="also run closest-point binding for comparison")
    p.set_defaults(handler=cmd_bind)

    p = sub.add_parser("prolong", help="build and export prolongation operators")
    scene_args(p)
    p.add_argument("--kind", choices=["bary", "barycentric", "biharmonic", "phong"], default=None)
    p.set_defaults(handler=cmd_prolong)

    p = sub.add_parser("simulate", help="run a simulation mode and write a run directory")
    scene_args(p)
    p.add_argument("--mode", choices=MODES, default="progressive")
    p.add_argument("--kind", choices=["bary", "barycentric", "biharmonic", "phong"], default=None)
    p.add_argument("--w", type=float, default=None, help="consistency penalty weight")
    p.add_argument("--workers", type=int, default=None, help="threads for direct-all-levels")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("metrics", help="recompute metric traces of a finished run")
    p.add_argument("--run", required=True)
    p.set_defaults(handler=cmd_metrics)

    p = sub.add_parser("report", help="summarize a finished run")
    p.add_argument("--run", required=True)
    p.set_defaults(handler=cmd_report)
    return parser


def _error_record(error: Exception, stage: str) -> str:
    return json.dumps({"error": type(error).__name__, "stage": stage, "message": str(error)})


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=getattr(logging, str(settings.log_level).upper(), logging.INFO),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (ConfigError, ValidationError, FileNotFoundError) as e:
        print(_error_record(e, args.command), file=sys.stderr)
        return EXIT_CONFIG
    except LodSimError as e:
        print(_error_record(e, args.command), file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
