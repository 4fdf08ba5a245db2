"""
Run Store - run directories: per-frame dumps, boundary OBJs and the reproduction manifest
"""

import hashlib
import json
import logging
import platform
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pydantic
import scipy

from config import settings
from models.errors import RunStoreError
from models.grid import SolutionGrid
from models.hierarchy import Hierarchy
from pipeline.mesh_io import write_boundary_obj
from pipeline.mesh_ops import extract_boundary

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
VERSION = "1.0.0"


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def versions() -> Dict[str, str]:
    return {
        "lodsim": VERSION,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pydantic": pydantic.VERSION,
    }


def frame_path(run_dir, level: int, t: int) -> Path:
    return Path(run_dir) / "levels" / f"level_{level}" / f"x_{t:05d}.npy"


class RunStore:
    """One run directory. The manifest is written last and marks the run complete."""

    def __init__(self, run_dir, command: str, mode: Optional[str] = None):
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.manifest: Dict[str, object] = {
            "command": command,
            "mode": mode,
            "created_at": datetime.now().isoformat(),
            "versions": versions(),
            "complete": False,
        }

    def record_scene(self, scene_path, scene):
        scene_path = Path(scene_path)
        self.manifest["scene"] = {
            "path": str(scene_path.resolve()),
            "sha256": file_sha256(scene_path),
            "text": scene_path.read_text(),
            "name": scene.name,
        }
        self.manifest["seed"] = scene.seed

    def write_grid(self, grid: SolutionGrid, hierarchy: Hierarchy, export_obj: Optional[bool] = None):
        """Dump every computed frame; boundary OBJs next to them when enabled."""
        export_obj = settings.export_obj if export_obj is None else export_obj
        levels = []
        for level in range(grid.n_levels):
            if not grid.has(level, 0):
                continue
            boundary = extract_boundary(hierarchy[level]) if export_obj else None
            frames = 0
            for t in range(grid.steps + 1):
                if not grid.has(level, t):
                    break
                path = frame_path(self.run_dir, level, t)
                path.parent.mkdir(parents=True, exist_ok=True)
                np.save(path, grid.x(level, t))
                target = grid.cell(level, t).x_tilde
                if target is not None:
                    np.save(path.with_name(f"target_{t:05d}.npy"), target)
                if boundary is not None:
                    write_boundary_obj(grid.x(level, t), boundary, path.with_suffix(".obj"))
                frames += 1
            np.save(self.run_dir / "levels" / f"level_{level}" / "v_00000.npy", grid.v(level, 0))
            levels.append({
                "level": level,
                "label": hierarchy.labels[level],
                "vertices": hierarchy[level].n_vertices,
                "frames": frames,
                "wall_time": grid.row_times.get(level),
                "reports": [r.to_dict() if r is not None else None for r in grid.reports(level)],
            })
        self.manifest.update({"h": grid.h, "steps": grid.steps, "levels": levels})
        logger.info(f"Wrote {sum(l['frames'] for l in levels)} frames to {self.run_dir}")

    def update(self, **entries):
        self.manifest.update(entries)

    def finish(self) -> Path:
        self.manifest["complete"] = True
        path = self.run_dir / MANIFEST
        with open(path, "w") as f:
            json.dump(self.manifest, f, indent=2, sort_keys=True, default=_json_default)
        return path


def _json_default(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)


def load_manifest(run_dir) -> Dict[str, object]:
    path = Path(run_dir) / MANIFEST
    if not path.exists():
        raise RunStoreError(f"No manifest in {run_dir}")
    with open(path, "r") as f:
        manifest = json.load(f)
    if not manifest.get("complete"):
        raise RunStoreError(f"Run in {run_dir} is incomplete")
    return manifest


def load_grid(run_dir) -> SolutionGrid:
    """Rebuild the solution grid from frame dumps of a complete run."""
    manifest = load_manifest(run_dir)
    levels = manifest.get("levels") or []
    if not levels:
        raise RunStoreError(f"Run in {run_dir} has no level data")
    rows: List[np.ndarray] = []
    velocities: List[np.ndarray] = []
    targets: List[List[Optional[np.ndarray]]] = []
    for entry in levels:
        level = entry["level"]
        frames = []
        for t in range(entry["frames"]):
            path = frame_path(run_dir, level, t)
            if not path.exists():
                raise RunStoreError(f"Missing frame {path}")
            frames.append(np.load(path))
        rows.append(np.stack(frames))
        stored = [path.with_name(f"target_{t:05d}.npy") for t in range(1, entry["frames"])]
        targets.append([np.load(p) if p.exists() else None for p in stored])
        velocities.append(np.load(Path(run_dir) / "levels" / f"level_{level}" / "v_00000.npy"))
    if len({len(r) for r in rows}) != 1:
        raise RunStoreError(f"Levels in {run_dir} have different frame counts")
    return SolutionGrid.from_rows(rows, manifest["h"], velocities, targets=targets)
