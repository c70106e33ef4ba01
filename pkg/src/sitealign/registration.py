"""Robust point-to-point ICP with an optional gravity-alignment bias.

The registration objective is

    E(R, t) = 1/2 * sum_i w_i * || b_i - (R r_i + t) ||^2
            + gamma/2 * || g_m - R g_0 ||^2

where ``g_0`` is the body's canonical up direction, ``g_m`` the world's
gravity-up, and ``gamma`` a semantic weight saying how strongly this object
family tends to stand upright. Because both vectors are unit length the
gravity term equals ``gamma * (1 - g_m . R g_0)``, so it enters the
closed-form rotation solve as one extra direction-to-direction
correspondence: gradient-free at perfect alignment, and it gets out of the
way wherever the data already agrees with gravity.

The solve itself is the weighted Kabsch construction: weighted centroids,
a 3x3 cross-covariance, and an SVD with a sign correction so reflections
are never returned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    DegenerateGeometryError,
    InfeasibleRegistrationError,
    InsufficientSceneError,
)
from .geometry import UP, RigidTransform, Rotation, seeded_rng, tilt_angle, unit_vector
from .mesh import OrientedSampleSet, TriangleMesh, sample_mesh_with_normals

__all__ = [
    "IcpParams",
    "GravityPrior",
    "PairSet",
    "RestartDiagnostic",
    "RegistrationResult",
    "match_pairs",
    "relax_if_few",
    "trim_pairs",
    "robust_weights",
    "solve_rigid",
    "gravity_penalty",
    "apply_bias",
    "project_yaw",
    "converged",
    "score_pose",
    "objective_value",
    "run_registration",
]

# A registration needs at least this many scene points to be meaningful.
MIN_SCENE_POINTS = 6
# The rigid solve needs at least this many correspondences.
MIN_PAIRS = 3
# Bias modes accepted by apply_bias / run_registration.
BIAS_MODES = ("penalty", "corrective")


@dataclass(frozen=True)
class IcpParams:
    """Knobs of the iterative alignment loop.

    Distances are meters, angles degrees. Defaults suit desk-scale scenes
    (objects tens of centimeters across).
    """

    sample_count: int = 600
    max_iterations: int = 60
    max_pair_distance: float = 0.25
    normal_gate_deg: float = 60.0
    trim_fraction: float = 0.2
    huber_delta: float = 0.02
    eps_rot_deg: float = 0.05
    eps_trans: float = 0.0005
    restarts: int = 8
    yaw_jitter_deg: float = 45.0
    gravity_weight_initial: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.sample_count < 1:
            raise ValueError("sample_count must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if self.max_pair_distance <= 0:
            raise ValueError("max_pair_distance must be positive")
        if not 0.0 <= self.trim_fraction < 1.0:
            raise ValueError("trim_fraction must be in [0, 1)")
        if self.huber_delta <= 0:
            raise ValueError("huber_delta must be positive")
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")


@dataclass(frozen=True, eq=False)
class GravityPrior:
    """Semantic gravity prior for one object family.

    ``upright_bias`` is the fraction of the remaining tilt corrected per
    iteration in corrective mode; ``effective_weight`` is the gravity term's
    weight in penalty mode. ``yaw_only`` restricts pose updates to rotation
    about the gravity axis (for objects known to stand flat, e.g. walls).
    """

    gravity_world: np.ndarray = field(default_factory=lambda: UP.copy())
    upright_model: np.ndarray = field(default_factory=lambda: UP.copy())
    upright_bias: float = 0.5
    effective_weight: float = 1.0
    yaw_only: bool = False

    def __post_init__(self):
        gw = unit_vector(self.gravity_world)
        um = unit_vector(self.upright_model)
        gw.setflags(write=False)
        um.setflags(write=False)
        object.__setattr__(self, "gravity_world", gw)
        object.__setattr__(self, "upright_model", um)
        if not 0.0 <= self.upright_bias <= 1.0:
            raise ValueError("upright_bias must lie in [0, 1]")
        if self.effective_weight < 0.0:
            raise ValueError("effective_weight must be non-negative")


@dataclass(frozen=True, eq=False)
class PairSet:
    """Matched correspondences, all arrays row-aligned.

    ``model_points`` are already in world coordinates (the current pose has
    been applied); ``residuals`` are the point-to-point distances.
    """

    model_points: np.ndarray
    scene_points: np.ndarray
    model_normals: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        mp = np.asarray(self.model_points, dtype=float).reshape(-1, 3)
        sp = np.asarray(self.scene_points, dtype=float).reshape(-1, 3)
        mn = np.asarray(self.model_normals, dtype=float).reshape(-1, 3)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if not (len(mp) == len(sp) == len(mn) == len(w)):
            raise ValueError("pair arrays must have equal length")
        object.__setattr__(self, "model_points", mp)
        object.__setattr__(self, "scene_points", sp)
        object.__setattr__(self, "model_normals", mn)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return len(self.weights)

    @property
    def residuals(self) -> np.ndarray:
        return np.linalg.norm(self.scene_points - self.model_points, axis=1)

    @staticmethod
    def empty() -> "PairSet":
        z = np.zeros((0, 3))
        return PairSet(z, z, z, np.zeros(0))


@dataclass
class RestartDiagnostic:
    """What one restart did: where it started and how well it ended."""

    initial_yaw_deg: float
    final_score: float | None
    iterations: int
    converged: bool
    feasible: bool
    error: str | None = None

    def as_dict(self) -> dict:
        return {
            "initialYawDeg": self.initial_yaw_deg,
            "finalScore": self.final_score,
            "iterations": self.iterations,
            "converged": self.converged,
            "feasible": self.feasible,
            "error": self.error,
        }


@dataclass
class RegistrationResult:
    """Best pose over all restarts plus bookkeeping for reports."""

    pose: RigidTransform
    score: float
    iterations: int
    restart_index: int
    final_pair_count: int
    converged: bool
    per_restart: list
    trace: list | None = None

    def as_dict(self) -> dict:
        d = {
            "pose": self.pose.as_dict(),
            "score": self.score,
            "iterations": self.iterations,
            "restartIndex": self.restart_index,
            "finalPairCount": self.final_pair_count,
            "converged": self.converged,
            "perRestart": [r.as_dict() for r in self.per_restart],
        }
        if self.trace is not None:
            d["trace"] = self.trace
        return d


# ---------------------------------------------------------------------------
# pipeline stages


def match_pairs(
    model: OrientedSampleSet,
    scene,
    max_pair_distance: float,
    normal_gate_deg: float | None,
    *,
    scene_normals=None,
    residual_floor: float = 0.02,
    tree: cKDTree | None = None,
) -> PairSet:
    """Nearest-neighbor correspondences under a distance cap and normal gate.

    A candidate pair is rejected when the match looks like a front-to-back
    mismatch: the direction from model point to scene point points more than
    ``180 - normal_gate_deg`` away from the model normal AND the residual is
    large enough (> ``residual_floor``) that the direction is trustworthy.
    When the scene carries normals, pairs whose normals disagree by more
    than ``normal_gate_deg`` are rejected as well. ``normal_gate_deg=None``
    disables both checks. All surviving pairs get weight 1.
    """
    scene = np.asarray(scene, dtype=float).reshape(-1, 3)
    if len(scene) < MIN_SCENE_POINTS:
        raise InsufficientSceneError(
            f"scene has {len(scene)} points, need at least {MIN_SCENE_POINTS}"
        )
    if tree is None:
        tree = cKDTree(scene)
    dist, idx = tree.query(model.points)
    keep = dist <= max_pair_distance

    if normal_gate_deg is not None:
        disp = scene[idx] - model.points
        safe = np.where(dist < 1e-15, 1.0, dist)
        cos_view = np.einsum("ij,ij->i", model.normals, disp / safe[:, None])
        # reject only matches that are both behind the surface and far
        behind = cos_view < -math.cos(math.radians(normal_gate_deg))
        keep &= ~(behind & (dist > residual_floor))
        if scene_normals is not None:
            scene_normals = np.asarray(scene_normals, dtype=float).reshape(-1, 3)
            cos_nn = np.einsum("ij,ij->i", model.normals, scene_normals[idx])
            keep &= cos_nn >= math.cos(math.radians(normal_gate_deg))

    return PairSet(
        model.points[keep],
        scene[idx[keep]],
        model.normals[keep],
        np.ones(int(keep.sum())),
    )


def relax_if_few(
    pairs: PairSet,
    model: OrientedSampleSet,
    scene,
    max_pair_distance: float,
    *,
    tree: cKDTree | None = None,
) -> PairSet:
    """Re-match with doubled distance and no gate when pairing starved.

    Triggered below six pairs; if even the relaxed match yields fewer than
    three, registration is infeasible at this pose.
    """
    if len(pairs) >= MIN_SCENE_POINTS:
        return pairs
    relaxed = match_pairs(
        model, scene, 2.0 * max_pair_distance, None, tree=tree
    )
    if len(relaxed) < MIN_PAIRS:
        raise InfeasibleRegistrationError(
            f"only {len(relaxed)} correspondences after relaxed matching"
        )
    return relaxed


def trim_pairs(pairs: PairSet, trim_fraction: float) -> PairSet:
    """Drop the ``ceil(trim_fraction * n)`` worst pairs by residual.

    Never trims below three pairs; order of the survivors follows ascending
    residual so downstream stages see a deterministic layout.
    """
    n = len(pairs)
    if n == 0 or trim_fraction <= 0.0:
        return pairs
    drop = math.ceil(trim_fraction * n)
    kept = max(n - drop, MIN_PAIRS)
    if kept >= n:
        return pairs
    order = np.argsort(pairs.residuals, kind="stable")[:kept]
    return PairSet(
        pairs.model_points[order],
        pairs.scene_points[order],
        pairs.model_normals[order],
        pairs.weights[order],
    )


def robust_weights(pairs: PairSet, huber_delta: float) -> PairSet:
    """Huber IRLS weights: 1 inside ``huber_delta``, ``delta / r`` outside."""
    r = pairs.residuals
    w = np.where(r <= huber_delta, 1.0, huber_delta / np.where(r > 0, r, 1.0))
    return PairSet(pairs.model_points, pairs.scene_points, pairs.model_normals, w)


def _weighted_rigid_solve(src, dst, weights, dir_src=None, dir_dst=None, dir_weight=0.0):
    """Weighted Kabsch with optional direction-only constraints.

    Directions contribute to the cross-covariance (rotation) but never to
    the centroids (translation). Raises on rank-deficient geometry.
    """
    w = np.asarray(weights, dtype=float)
    total = float(w.sum())
    if len(src) < MIN_PAIRS:
        raise DegenerateGeometryError(f"need at least {MIN_PAIRS} point pairs, got {len(src)}")
    if total <= 0.0:
        raise DegenerateGeometryError("total correspondence weight is zero")
    src_c = (w[:, None] * src).sum(axis=0) / total
    dst_c = (w[:, None] * dst).sum(axis=0) / total
    h = (w[:, None] * (src - src_c)).T @ (dst - dst_c)
    if dir_src is not None:
        h = h + dir_weight * np.outer(np.asarray(dir_src, dtype=float), np.asarray(dir_dst, dtype=float))
    u, s, vt = np.linalg.svd(h)
    if s[0] < 1e-15 or s[1] <= 1e-9 * s[0]:
        raise DegenerateGeometryError(
            "correspondences are (near) collinear or coincident; rotation is not determined"
        )
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rot_m = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    rotation = Rotation.from_matrix(rot_m)
    translation = dst_c - rot_m @ src_c
    return rotation, translation


def solve_rigid(pairs: PairSet):
    """Least-squares rigid motion for the weighted pairs.

    Returns ``(rotation, translation)`` minimizing
    ``sum_i w_i ||b_i - (R a_i + t)||^2`` with a guaranteed proper rotation
    (determinant +1; reflections are excluded by the SVD sign correction).
    """
    return _weighted_rigid_solve(pairs.model_points, pairs.scene_points, pairs.weights)


def gravity_penalty(rotation: Rotation, prior: GravityPrior) -> float:
    """Value of the gravity term ``gamma * (1 - g_m . R g_0)`` for unit vectors."""
    c = float(np.dot(prior.gravity_world, rotation.apply(prior.upright_model)))
    return prior.effective_weight * (1.0 - c)


def apply_bias(pairs: PairSet, prior: GravityPrior, current_pose: RigidTransform, mode: str = "penalty"):
    """Bias the incremental solve toward the upright orientation.

    In ``penalty`` mode the rigid step is re-solved with one extra
    direction-only correspondence (current up direction -> gravity up),
    weighted by ``effective_weight`` times the mean data weight; the pair
    influences rotation only, never translation. In ``corrective`` mode the
    data-only delta is composed with a rotation that removes
    ``upright_bias`` of the current tilt about the axis ``up x gravity``.
    With ``effective_weight == 0`` (penalty) or ``upright_bias == 0``
    (corrective) the result is exactly the unbiased solve.
    """
    if mode not in BIAS_MODES:
        raise ValueError(f"unknown bias mode {mode!r}, expected one of {BIAS_MODES}")
    up_world = current_pose.rotation.apply(prior.upright_model)

    if mode == "penalty":
        mean_w = float(pairs.weights.mean()) if len(pairs) else 1.0
        return _weighted_rigid_solve(
            pairs.model_points,
            pairs.scene_points,
            pairs.weights,
            dir_src=up_world,
            dir_dst=prior.gravity_world,
            dir_weight=prior.effective_weight * mean_w,
        )

    # corrective: data solve first (identity when there is nothing to solve),
    # then blend out a fraction of whatever tilt remains
    if len(pairs) >= MIN_PAIRS:
        rotation, translation = solve_rigid(pairs)
    else:
        rotation, translation = Rotation.identity(), np.zeros(3)
    if prior.upright_bias <= 0.0:
        return rotation, translation
    up_after = rotation.apply(up_world)
    cos_t = float(np.clip(np.dot(prior.gravity_world, up_after), -1.0, 1.0))
    tilt_deg = math.degrees(math.acos(cos_t))
    if tilt_deg <= 1e-12:
        return rotation, translation
    axis = np.cross(up_after, prior.gravity_world)
    norm = float(np.linalg.norm(axis))
    if norm < 1e-12:
        # fully inverted: any horizontal axis works; pick one deterministically
        helper = np.array([1.0, 0.0, 0.0])
        if abs(float(np.dot(helper, prior.gravity_world))) > 0.9:
            helper = np.array([0.0, 1.0, 0.0])
        axis = np.cross(prior.gravity_world, helper)
        norm = float(np.linalg.norm(axis))
    blend = Rotation.from_axis_angle(axis / norm, prior.upright_bias * tilt_deg)
    return blend.compose(rotation), translation


def project_yaw(delta_rotation: Rotation, gravity_world, yaw_only: bool) -> Rotation:
    """Keep only the rotation component about the gravity axis.

    Uses the twist half of the twist/swing split of the quaternion; a pure
    swing (no component about gravity) maps to the identity. Pass-through
    when ``yaw_only`` is false.
    """
    if not yaw_only:
        return delta_rotation
    g = unit_vector(gravity_world)
    q = delta_rotation
    proj = q.x * g[0] + q.y * g[1] + q.z * g[2]
    norm = math.sqrt(q.w * q.w + proj * proj)
    if norm < 1e-12:
        return Rotation.identity()
    return Rotation(q.w, proj * g[0], proj * g[1], proj * g[2])


def converged(delta_rotation: Rotation, delta_translation, eps_rot_deg: float, eps_trans: float) -> bool:
    """True when the incremental update is negligible in both components."""
    return (
        delta_rotation.angle_deg() <= eps_rot_deg
        and float(np.linalg.norm(delta_translation)) <= eps_trans
    )


def score_pose(
    model: OrientedSampleSet,
    pose: RigidTransform,
    scene,
    max_pair_distance: float,
    *,
    tree: cKDTree | None = None,
) -> float:
    """Pose quality in [-1, 1]: inlier fraction minus normalized inlier RMS.

    1.0 for a perfect overlap, 0.0 when nothing lands within
    ``max_pair_distance``. Restart selection maximizes this.
    """
    scene = np.asarray(scene, dtype=float).reshape(-1, 3)
    if tree is None:
        tree = cKDTree(scene)
    dist, _ = tree.query(pose.apply(model.points))
    inlier = dist <= max_pair_distance
    frac = float(inlier.mean()) if len(dist) else 0.0
    if not inlier.any():
        return 0.0
    rms = float(np.sqrt(np.mean(dist[inlier] ** 2)))
    return frac - rms / max_pair_distance


def objective_value(pairs: PairSet, delta: RigidTransform, prior: GravityPrior | None = None, upright_world=None) -> float:
    """Evaluate the registration objective for an incremental motion.

    ``upright_world`` is the model's up direction *before* the delta is
    applied (defaults to the prior's canonical up, which is only correct at
    identity pose). Pass the current up when scoring mid-iteration deltas.
    """
    diff = pairs.scene_points - delta.apply(pairs.model_points)
    value = 0.5 * float(np.sum(pairs.weights * np.einsum("ij,ij->i", diff, diff)))
    if prior is not None and prior.effective_weight > 0.0:
        up = prior.upright_model if upright_world is None else unit_vector(upright_world)
        g_err = prior.gravity_world - delta.rotation.apply(up)
        value += 0.5 * prior.effective_weight * float(np.dot(g_err, g_err))
    return value


# ---------------------------------------------------------------------------
# full loop


def _yawed(pose: RigidTransform, gravity_world, yaw_deg: float) -> RigidTransform:
    """Yaw the body in place about the gravity axis (translation untouched)."""
    if yaw_deg == 0.0:
        return pose
    spin = Rotation.from_axis_angle(gravity_world, yaw_deg)
    return RigidTransform(spin.compose(pose.rotation), pose.translation)


def run_registration(
    mesh: TriangleMesh,
    initial_pose: RigidTransform,
    scene,
    params: IcpParams,
    prior: GravityPrior | None = None,
    *,
    bias_mode: str = "penalty",
    scene_normals=None,
    collect_trace: bool = False,
) -> RegistrationResult:
    """Align ``mesh`` to ``scene`` starting from ``initial_pose``.

    Runs the trimmed, Huber-weighted ICP loop once per yaw restart (restart
    0 keeps the initial heading, the rest draw a seeded uniform jitter in
    ``+-yaw_jitter_deg`` about gravity) and returns the best pose by
    ``score_pose``, ties going to the lower restart index. Without a prior
    this is plain robust ICP on the identical restart schedule, so paired
    comparisons differ only in the gravity bias.
    """
    if bias_mode not in BIAS_MODES:
        raise ValueError(f"unknown bias mode {bias_mode!r}, expected one of {BIAS_MODES}")
    scene = np.asarray(scene, dtype=float).reshape(-1, 3)
    if len(scene) < MIN_SCENE_POINTS:
        raise InsufficientSceneError(
            f"scene has {len(scene)} points, need at least {MIN_SCENE_POINTS}"
        )

    samples = sample_mesh_with_normals(mesh, params.sample_count, params.seed)
    tree = cKDTree(scene)
    gravity = prior.gravity_world if prior is not None else UP

    jitter_rng = seeded_rng(params.seed, stream=1)
    yaws = [0.0]
    if params.restarts > 1:
        yaws += list(jitter_rng.uniform(-params.yaw_jitter_deg, params.yaw_jitter_deg, params.restarts - 1))

    best: RegistrationResult | None = None
    diagnostics: list[RestartDiagnostic] = []
    for restart_index, yaw in enumerate(yaws):
        pose = _yawed(initial_pose, gravity, float(yaw))
        iterations = 0
        did_converge = False
        pair_count = 0
        trace: list[dict] = []
        try:
            for _ in range(params.max_iterations):
                iterations += 1
                world = samples.transformed(pose)
                pairs = match_pairs(
                    world,
                    scene,
                    params.max_pair_distance,
                    params.normal_gate_deg,
                    scene_normals=scene_normals,
                    residual_floor=params.huber_delta,
                    tree=tree,
                )
                pairs = relax_if_few(pairs, world, scene, params.max_pair_distance, tree=tree)
                pairs = trim_pairs(pairs, params.trim_fraction)
                pairs = robust_weights(pairs, params.huber_delta)
                pair_count = len(pairs)

                if prior is not None:
                    d_rot, d_tr = apply_bias(pairs, prior, pose, mode=bias_mode)
                    d_rot = project_yaw(d_rot, gravity, prior.yaw_only)
                else:
                    d_rot, d_tr = solve_rigid(pairs)

                if collect_trace:
                    up_now = pose.rotation.apply(prior.upright_model) if prior else None
                    solve_prior = None
                    if prior is not None and bias_mode == "penalty":
                        # log the objective with the gravity weight the solve
                        # actually used this iteration (weight * mean data weight)
                        solve_prior = replace(
                            prior,
                            effective_weight=prior.effective_weight * float(pairs.weights.mean()),
                        )
                    delta = RigidTransform(d_rot, d_tr)
                    trace.append(
                        {
                            "iteration": iterations,
                            "pairs": pair_count,
                            "objectiveBefore": objective_value(
                                pairs, RigidTransform.identity(), solve_prior, upright_world=up_now
                            ),
                            "objectiveAfter": objective_value(pairs, delta, solve_prior, upright_world=up_now),
                            "deltaRotDeg": d_rot.angle_deg(),
                            "deltaTrans": float(np.linalg.norm(d_tr)),
                            "tiltDeg": tilt_angle(pose.rotation, prior.upright_model, gravity)
                            if prior
                            else tilt_angle(pose.rotation, UP, UP),
                        }
                    )

                pose = RigidTransform(d_rot, d_tr).compose(pose)
                if converged(d_rot, d_tr, params.eps_rot_deg, params.eps_trans):
                    did_converge = True
                    break

            score = score_pose(samples, pose, scene, params.max_pair_distance, tree=tree)
            diagnostics.append(RestartDiagnostic(float(yaw), score, iterations, did_converge, True))
            if best is None or score > best.score:
                best = RegistrationResult(
                    pose=pose,
                    score=score,
                    iterations=iterations,
                    restart_index=restart_index,
                    final_pair_count=pair_count,
                    converged=did_converge,
                    per_restart=[],
                    trace=trace if collect_trace else None,
                )
        except (InfeasibleRegistrationError, DegenerateGeometryError) as exc:
            diagnostics.append(
                RestartDiagnostic(float(yaw), None, iterations, False, False, error=str(exc))
            )

    if best is None:
        raise InfeasibleRegistrationError(
            "every restart failed to find enough correspondences",
            diagnostics=diagnostics,
        )
    best.per_restart = diagnostics
    return best
