"""Figure rendering for CLI reports (headless matplotlib, files only)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "save_scene_figure",
    "save_registration_figure",
    "save_comparison_figure",
    "save_exposure_figure",
]

_DPI = 120
_CYCLE = ("tab:blue", "tab:orange", "tab:green", "tab:red", "tab:purple", "tab:brown")


def _scatter_projections(axes, points, color, label, size=2.0, alpha=0.5):
    axes[0].scatter(points[:, 0], points[:, 1], s=size, c=color, alpha=alpha, label=label, linewidths=0)
    axes[1].scatter(points[:, 0], points[:, 2], s=size, c=color, alpha=alpha, label=label, linewidths=0)


def save_scene_figure(scene, path) -> None:
    """Top (x-y) and side (x-z) views of a generated scene."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 4.5))
    pts = scene.scene_points
    _scatter_projections(axes, pts, "0.6", "scene cloud")
    for i, (placed, mesh) in enumerate(zip(scene.objects, scene.meshes)):
        color = _CYCLE[i % len(_CYCLE)]
        verts = placed.truth_pose.apply(mesh.vertices)
        _scatter_projections(axes, verts, color, placed.spec.label, size=4.0, alpha=0.9)
    axes[0].set_xlabel("x [m]")
    axes[0].set_ylabel("y [m]")
    axes[0].set_title("top view")
    axes[1].set_xlabel("x [m]")
    axes[1].set_ylabel("z [m]")
    axes[1].set_title("side view")
    for ax in axes:
        ax.set_aspect("equal", adjustable="datalim")
    axes[1].legend(loc="upper right", fontsize=7, markerscale=3)
    fig.suptitle(f"scene: {scene.spec.name} (seed {scene.spec.seed})")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_registration_figure(scene_points, stages, path, title="") -> None:
    """Overlay of the scene cloud and model samples at selected poses.

    ``stages`` maps a legend label to an (N, 3) point array, drawn in order.
    """
    fig, axes = plt.subplots(1, 2, figsize=(10, 4.5))
    _scatter_projections(axes, np.asarray(scene_points), "0.7", "scene", alpha=0.35)
    for i, (label, pts) in enumerate(stages.items()):
        _scatter_projections(axes, np.asarray(pts), _CYCLE[i % len(_CYCLE)], label, size=3.0, alpha=0.8)
    axes[0].set_xlabel("x [m]")
    axes[0].set_ylabel("y [m]")
    axes[1].set_xlabel("x [m]")
    axes[1].set_ylabel("z [m]")
    for ax in axes:
        ax.set_aspect("equal", adjustable="datalim")
    axes[1].legend(loc="upper right", fontsize=7, markerscale=3)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_comparison_figure(report, path) -> None:
    """Grouped bars: baseline vs. proposed for every scenario and metric."""
    labels, base_vals, prop_vals = [], [], []
    for entry in report.entries:
        for row in entry["rows"]:
            labels.append(f"{entry['scenario']}\n{row['metric']}")
            base_vals.append(row["baseline"])
            prop_vals.append(row["proposed"])
    x = np.arange(len(labels))
    width = 0.38
    fig, ax = plt.subplots(figsize=(max(6.0, 1.1 * len(labels)), 4.2))
    ax.bar(x - width / 2, base_vals, width, label="baseline", color="tab:gray")
    ax.bar(x + width / 2, prop_vals, width, label="with prior", color="tab:blue")
    ax.set_xticks(x)
    ax.set_xticklabels(labels, fontsize=7)
    ax.set_ylabel("distance [m]")
    ax.set_title("alignment error: baseline vs. gravity prior")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_exposure_figure(monitor, records, path) -> None:
    """Per-worker A(8) trajectories with the action value and interventions."""
    fig, ax = plt.subplots(figsize=(8, 4.2))
    t0 = None
    for i, worker_id in enumerate(sorted(monitor.ledgers)):
        hist = monitor.ledgers[worker_id].history
        if not hist:
            continue
        times = np.array([h[0] for h in hist])
        if t0 is None:
            t0 = times.min()
        doses = [h[1] for h in hist]
        ax.step((times - t0) / 3600.0, doses, where="post", color=_CYCLE[i % len(_CYCLE)], label=worker_id)
    for r in records:
        if r.kind == "intervention" and t0 is not None:
            ax.axvline((r.timestamp - t0) / 3600.0, color="tab:red", linestyle=":", alpha=0.7)
    ax.axhline(monitor.config.eav, color="tab:red", linestyle="--", label=f"action value {monitor.config.eav}")
    ax.set_xlabel("time since first window [h]")
    ax.set_ylabel("A(8) [m/s$^2$]")
    ax.set_title("hand-arm vibration exposure")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
