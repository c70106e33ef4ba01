"""Alignment quality metrics and baseline-vs-proposed comparison reports."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import RigidTransform
from .mesh import TriangleMesh

__all__ = [
    "DistanceStats",
    "ScenarioMetrics",
    "ComparisonReport",
    "directed_hausdorff",
    "symmetric_hausdorff",
    "point_to_mesh_stats",
    "build_report",
    "report_to_text",
    "report_to_csv",
]


@dataclass(frozen=True)
class DistanceStats:
    """Summary of a set of point distances (meters)."""

    rmse: float
    mean: float
    max: float
    count: int

    @staticmethod
    def from_distances(d: np.ndarray) -> "DistanceStats":
        d = np.asarray(d, dtype=float).reshape(-1)
        if len(d) == 0:
            raise ValueError("cannot summarize an empty distance set")
        return DistanceStats(
            rmse=float(np.sqrt(np.mean(d * d))),
            mean=float(np.mean(d)),
            max=float(np.max(d)),
            count=int(len(d)),
        )

    def as_dict(self) -> dict:
        return {"rmse": self.rmse, "mean": self.mean, "max": self.max, "count": self.count}

    @staticmethod
    def from_dict(d: dict) -> "DistanceStats":
        return DistanceStats(float(d["rmse"]), float(d["mean"]), float(d["max"]), int(d["count"]))


def directed_hausdorff(a, b) -> float:
    """max over points of ``a`` of the distance to the nearest point of ``b``."""
    a = np.asarray(a, dtype=float).reshape(-1, 3)
    b = np.asarray(b, dtype=float).reshape(-1, 3)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("hausdorff distance needs non-empty point sets")
    dist, _ = cKDTree(b).query(a)
    return float(dist.max())


def symmetric_hausdorff(a, b) -> float:
    """max of the two directed Hausdorff distances."""
    return max(directed_hausdorff(a, b), directed_hausdorff(b, a))


def _point_segment_sq(points: np.ndarray, p: np.ndarray, q: np.ndarray) -> np.ndarray:
    seg = q - p
    denom = float(seg @ seg)
    if denom < 1e-30:
        diff = points - p
        return np.einsum("ij,ij->i", diff, diff)
    t = np.clip((points - p) @ seg / denom, 0.0, 1.0)
    diff = points - (p + t[:, None] * seg)
    return np.einsum("ij,ij->i", diff, diff)


def _point_triangle_sq(points: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Exact squared distance from each point to one triangle.

    The closest feature is either the interior (plane projection falls
    inside the triangle) or one of the three edges; both are evaluated in
    closed form.
    """
    n = np.cross(b - a, c - a)
    nn = float(n @ n)
    d = points - a
    signed = d @ n
    v0, v1 = b - a, c - a
    proj = points - (signed / nn)[:, None] * n
    v2 = proj - a
    d00, d01, d11 = float(v0 @ v0), float(v0 @ v1), float(v1 @ v1)
    d20 = v2 @ v0
    d21 = v2 @ v1
    denom = d00 * d11 - d01 * d01
    v = (d11 * d20 - d01 * d21) / denom
    w = (d00 * d21 - d01 * d20) / denom
    inside = (v >= 0.0) & (w >= 0.0) & (v + w <= 1.0)
    sq_edges = np.minimum(
        _point_segment_sq(points, a, b),
        np.minimum(_point_segment_sq(points, b, c), _point_segment_sq(points, c, a)),
    )
    return np.where(inside, signed * signed / nn, sq_edges)


def point_to_mesh_distances(samples, mesh: TriangleMesh, pose: RigidTransform) -> np.ndarray:
    """Distance from each sample point to a posed mesh surface.

    Distances use the exact point-to-triangle closed form (no surface
    sampling), so they are rigid-invariant: moving both the samples and
    the pose by the same motion leaves them unchanged.
    """
    samples = np.asarray(samples, dtype=float).reshape(-1, 3)
    if len(samples) == 0:
        raise ValueError("no sample points given")
    posed = mesh.transformed(pose)
    if posed.is_empty():
        raise ValueError("mesh has no usable triangles")
    a, b, c = posed.corners()
    best = np.full(len(samples), np.inf)
    for i in range(len(posed.triangles)):
        best = np.minimum(best, _point_triangle_sq(samples, a[i], b[i], c[i]))
    return np.sqrt(best)


def point_to_mesh_stats(samples, mesh: TriangleMesh, pose: RigidTransform) -> DistanceStats:
    """Distance statistics from sample points to a posed mesh surface."""
    return DistanceStats.from_distances(point_to_mesh_distances(samples, mesh, pose))


# ---------------------------------------------------------------------------
# comparison reports


@dataclass(frozen=True)
class ScenarioMetrics:
    """One scenario's stats for the baseline and the proposed method."""

    scenario: str
    baseline: DistanceStats
    proposed: DistanceStats


_METRICS = ("rmse", "mean", "max")


@dataclass(frozen=True)
class ComparisonReport:
    """Per-scenario, per-metric improvements of proposed over baseline."""

    entries: tuple

    def as_dict(self) -> dict:
        return {"scenarios": [dict(e) for e in self.entries]}


def _metric_row(metric: str, base: float, prop: float) -> dict:
    improvement = base - prop
    pct = None if base == 0.0 else improvement / base * 100.0
    return {
        "metric": metric,
        "baseline": base,
        "proposed": prop,
        "improvement": improvement,
        "improvementPct": pct,
    }


def build_report(per_scenario) -> ComparisonReport:
    """Assemble the comparison table from per-scenario metric pairs.

    ``improvement`` is ``baseline - proposed`` (positive means the proposed
    method reduced the distance); the percentage is relative to baseline and
    omitted when the baseline is exactly zero.
    """
    entries = []
    for sm in per_scenario:
        rows = [
            _metric_row(m, getattr(sm.baseline, m), getattr(sm.proposed, m))
            for m in _METRICS
        ]
        entries.append({"scenario": sm.scenario, "rows": rows})
    return ComparisonReport(tuple(entries))


def _format_improvement(row: dict) -> str:
    imp = row["improvement"]
    pct = row["improvementPct"]
    arrow = "↓" if imp >= 0 else "↑"
    if pct is None:
        return f"{abs(imp):.6f} (n/a {arrow})"
    return f"{abs(imp):.6f} ({abs(pct):.1f}% {arrow})"


def report_to_text(report: ComparisonReport) -> str:
    """Monospace table with aligned columns; down arrows mark reductions."""
    header = ("scenario", "metric", "baseline", "with prior", "improvement")
    lines = []
    for entry in report.entries:
        for row in entry["rows"]:
            lines.append(
                (
                    entry["scenario"],
                    row["metric"],
                    f"{row['baseline']:.6f}",
                    f"{row['proposed']:.6f}",
                    _format_improvement(row),
                )
            )
    widths = [max(len(header[i]), *(len(line[i]) for line in lines)) if lines else len(header[i]) for i in range(5)]
    out = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(header))]
    out.append("  ".join("-" * w for w in widths))
    for line in lines:
        out.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(line)))
    return "\n".join(out) + "\n"


def report_to_csv(report: ComparisonReport) -> str:
    """Delimited form of the comparison table for external plotting."""
    buf = io.StringIO()
    buf.write("scenario,metric,baseline,proposed,improvement,improvement_pct\n")
    for entry in report.entries:
        for row in entry["rows"]:
            pct = "" if row["improvementPct"] is None else f"{row['improvementPct']:.6f}"
            buf.write(
                f"{entry['scenario']},{row['metric']},{row['baseline']:.9g},"
                f"{row['proposed']:.9g},{row['improvement']:.9g},{pct}\n"
            )
    return buf.getvalue()
