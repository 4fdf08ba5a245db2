"""
Report - per-level timing, speedup and metric roll-ups for a finished run
"""

import csv
import logging
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np

from models.errors import RunStoreError
from pipeline.metrics import read_trace
from pipeline.run_store import load_manifest

logger = logging.getLogger(__name__)

LEVEL_COLUMNS = ["level", "label", "vertices", "frames", "wall_time", "mean_iterations", "min_distance"]


def level_table(manifest: Dict) -> List[Dict]:
    rows = []
    for entry in manifest.get("levels", []):
        reports = [r for r in entry.get("reports", []) if r]
        distances = [r["min_distance"] for r in reports if r.get("min_distance") is not None]
        rows.append({
            "level": entry["level"],
            "label": entry.get("label", ""),
            "vertices": entry["vertices"],
            "frames": entry["frames"],
            "wall_time": entry.get("wall_time"),
            "mean_iterations": float(np.mean([r["iterations"] for r in reports])) if reports else 0.0,
            "min_distance": min(distances) if distances else None,
        })
    return rows


def speedup_ratio(rows: List[Dict]) -> float:
    """Wall time of the finest level over that of the coarsest; 1.0 for a single level."""
    if len(rows) < 2:
        return 1.0
    first, last = rows[0]["wall_time"], rows[-1]["wall_time"]
    if not first or last is None:
        return float("nan")
    return float(last) / float(first)


def check_monotone_times(rows: List[Dict]) -> bool:
    times = [r["wall_time"] for r in rows if r["wall_time"] is not None]
    monotone = all(a <= b for a, b in zip(times, times[1:]))
    if not monotone:
        logger.warning(f"Per-level wall time is not monotone in level: {times}")
    return monotone


def metric_summary(run_dir: Path) -> Dict[str, Dict[int, float]]:
    summary: Dict[str, Dict[int, float]] = {}
    continuity = run_dir / "metrics" / "continuity.csv"
    consistency = run_dir / "metrics" / "consistency.csv"
    if continuity.exists():
        rows = read_trace(continuity)
        summary["mean_n"] = _mean_by_level(rows, "n")
        summary["mean_e"] = _mean_by_level(rows, "e")
    if consistency.exists():
        summary["mean_d"] = _mean_by_level(read_trace(consistency), "d")
    return summary


def _mean_by_level(rows: List[Dict[str, float]], column: str) -> Dict[int, float]:
    grouped: Dict[int, List[float]] = {}
    for row in rows:
        grouped.setdefault(int(row["l"]), []).append(row[column])
    return {level: float(np.mean(values)) for level, values in sorted(grouped.items())}


def build_report(run_dir) -> Tuple[str, Dict]:
    """Summary text plus the same numbers as a dict; CSV roll-ups land in run_dir/report/."""
    run_dir = Path(run_dir)
    manifest = load_manifest(run_dir)
    rows = level_table(manifest)
    if not rows:
        raise RunStoreError(f"Run in {run_dir} recorded no levels")
    summary = {
        "mode": manifest.get("mode"),
        "levels": rows,
        "speedup": speedup_ratio(rows),
        "monotone_wall_time": check_monotone_times(rows),
        "metrics": metric_summary(run_dir),
        "com_divergence": manifest.get("com_divergence"),
    }

    out = run_dir / "report"
    out.mkdir(exist_ok=True)
    with open(out / "levels.csv", "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=LEVEL_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    with open(out / "metrics.csv", "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["metric", "l", "mean"])
        for name, per_level in summary["metrics"].items():
            for level, value in per_level.items():
                writer.writerow([name, level, f"{value:.17g}"])

    return format_report(summary), summary


def format_report(summary: Dict) -> str:
    lines = [f"Run mode: {summary['mode']}", "", "level  vertices  frames  wall_time[s]  mean_iters"]
    for row in summary["levels"]:
        wall = "-" if row["wall_time"] is None else f"{row['wall_time']:.3f}"
        lines.append(f"{row['level']:>5}  {row['vertices']:>8}  {row['frames']:>6}  {wall:>12}  {row['mean_iterations']:>10.2f}")
    lines.append("")
    lines.append(f"Speedup (finest / coarsest wall time): {summary['speedup']:.2f}")
    if not summary["monotone_wall_time"]:
        lines.append("WARNING: per-level wall time is not monotone")
    divergence = summary.get("com_divergence")
    if divergence:
        lines.append(f"Center-of-mass divergence (mean over levels): {divergence.get('mean')}")
    for name, per_level in summary["metrics"].items():
        values = ", ".join(f"l={level}: {value:.4g}" for level, value in per_level.items())
        lines.append(f"{name}: {values}")
    return "\n".join(lines)
