"""Robust ICP pipeline stages and the gravity-biased variant."""

import math

import numpy as np
import pytest

from conftest import random_rotation, random_transform
from sitealign.errors import (
    DegenerateGeometryError,
    InfeasibleRegistrationError,
    InsufficientSceneError,
)
from sitealign.geometry import RigidTransform, Rotation, geodesic_angle, tilt_angle, unit_vector
from sitealign.mesh import OrientedSampleSet, sample_mesh_with_normals
from sitealign.registration import (
    GravityPrior,
    IcpParams,
    PairSet,
    apply_bias,
    converged,
    gravity_penalty,
    match_pairs,
    objective_value,
    project_yaw,
    relax_if_few,
    robust_weights,
    run_registration,
    score_pose,
    solve_rigid,
    trim_pairs,
)

UP = np.array([0.0, 0.0, 1.0])


def oriented_cloud(rng, n=100, scale=0.5):
    pts = rng.normal(scale=scale, size=(n, 3))
    normals = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    return OrientedSampleSet(pts, normals)


def pair_set(model, scene, weights=None):
    n = len(model)
    return PairSet(
        model,
        scene,
        np.tile(UP, (n, 1)),
        np.ones(n) if weights is None else np.asarray(weights, float),
    )


# -- match_pairs ----------------------------------------------------


def test_match_identical_clouds_self_matches(rng):
    model = oriented_cloud(rng)
    pairs = match_pairs(model, model.points, 0.25, 60.0)
    assert len(pairs) == len(model)
    assert pairs.residuals.max() < 1e-12
    assert np.all(pairs.weights == 1.0)


def test_match_shifted_scene_is_empty(rng):
    model = oriented_cloud(rng, scale=0.03)  # compact cloud, extent well under the cap
    cap = 0.25
    shifted = model.points + np.array([2.0 * cap, 0.0, 0.0])
    pairs = match_pairs(model, shifted, cap, None)
    assert len(pairs) == 0


def test_match_noisy_scene_keeps_all_pairs(rng):
    model = oriented_cloud(rng, n=100)
    direction = rng.normal(size=(100, 3))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radius = rng.uniform(0.0, 0.01, size=(100, 1))
    scene = model.points + direction * radius
    pairs = match_pairs(model, scene, 0.25, 60.0)
    assert len(pairs) == 100
    assert pairs.residuals.max() <= 0.01 + 1e-12


def test_match_rejects_back_face_matches():
    # one model point whose normal faces away from its only scene candidate
    model = OrientedSampleSet([[0.0, 0.0, 0.0]], [[1.0, 0.0, 0.0]])
    scene = np.tile([-0.1, 0.0, 0.0], (6, 1))  # behind the surface, > residual floor
    pairs = match_pairs(model, scene, 0.25, 60.0)
    assert len(pairs) == 0
    # the same geometry passes with the gate disabled
    assert len(match_pairs(model, scene, 0.25, None)) == 1


def test_match_scene_normal_gate(rng):
    model = oriented_cloud(rng, n=50)
    flipped = -model.normals
    pairs = match_pairs(model, model.points, 0.25, 60.0, scene_normals=flipped)
    assert len(pairs) == 0


def test_match_requires_six_scene_points(rng):
    model = oriented_cloud(rng, n=10)
    with pytest.raises(InsufficientSceneError):
        match_pairs(model, model.points[:5], 0.25, 60.0)


# -- relax_if_few ---------------------------------------------------


def test_relax_passes_through_when_enough(rng):
    model = oriented_cloud(rng, n=50)
    pairs = match_pairs(model, model.points, 0.25, 60.0)
    relaxed = relax_if_few(pairs, model, model.points, 0.25)
    assert relaxed is pairs


def test_relax_rematches_with_doubled_cap(rng):
    model = oriented_cloud(rng, n=10, scale=0.05)
    scene = model.points + np.array([0.3, 0.0, 0.0])  # outside 0.25, inside 0.5
    starved = match_pairs(model, scene, 0.25, None)
    assert len(starved) < 6
    relaxed = relax_if_few(starved, model, scene, 0.25)
    assert len(relaxed) == 10


def test_relax_raises_when_hopeless(rng):
    model = oriented_cloud(rng, n=10, scale=0.05)
    scene = model.points + np.array([10.0, 0.0, 0.0])
    starved = match_pairs(model, scene, 0.25, None)
    with pytest.raises(InfeasibleRegistrationError):
        relax_if_few(starved, model, scene, 0.25)


# -- trim_pairs / robust_weights ------------------------------------


def test_trim_zero_fraction_unchanged(rng):
    pairs = pair_set(rng.normal(size=(10, 3)), rng.normal(size=(10, 3)))
    assert trim_pairs(pairs, 0.0) is pairs


def test_trim_drops_worst_residuals(rng):
    model = rng.normal(size=(10, 3))
    offsets = np.linspace(0.01, 0.10, 10)
    scene = model + offsets[:, None] * UP
    trimmed = trim_pairs(pair_set(model, scene), 0.2)
    assert len(trimmed) == 8
    assert trimmed.residuals.max() < 0.089  # the 0.09 and 0.10 rows are gone
    assert np.all(np.diff(trimmed.residuals) >= 0)  # ascending layout


def test_trim_never_below_three(rng):
    pairs = pair_set(rng.normal(size=(3, 3)), rng.normal(size=(3, 3)))
    assert len(trim_pairs(pairs, 0.9)) == 3


def test_huber_weights_shape():
    model = np.zeros((3, 3))
    scene = np.array([[0.0, 0.0, 0.0], [0.02, 0.0, 0.0], [0.04, 0.0, 0.0]])
    weighted = robust_weights(pair_set(model, scene), 0.02)
    assert np.allclose(weighted.weights, [1.0, 1.0, 0.5], atol=1e-12)


# -- solve_rigid ----------------------------------------------------


def test_solve_aligned_is_identity(rng):
    pts = rng.normal(size=(20, 3))
    rot, tr = solve_rigid(pair_set(pts, pts))
    assert rot.angle_deg() < 1e-9
    assert np.linalg.norm(tr) < 1e-9


def test_solve_recovers_random_transforms(rng):
    for _ in range(100):
        src = rng.normal(size=(12, 3))
        truth = random_transform(rng)
        rot, tr = solve_rigid(pair_set(src, truth.apply(src)))
        assert geodesic_angle(rot, truth.rotation) < 1e-9
        assert np.linalg.norm(tr - truth.translation) < 1e-9


def test_solve_weights_pull_toward_heavy_pairs(rng):
    src = rng.normal(size=(10, 3))
    truth = random_transform(rng)
    dst = truth.apply(src)
    dst[0] += 5.0  # gross outlier
    weights = np.ones(10)
    weights[0] = 0.0
    rot, tr = solve_rigid(pair_set(src, dst, weights))
    assert geodesic_angle(rot, truth.rotation) < 1e-9
    assert np.linalg.norm(tr - truth.translation) < 1e-9


def test_solve_determinant_always_positive(rng):
    # planar points with mirror-tempting noise must still yield det +1
    for _ in range(50):
        src = rng.normal(size=(8, 3))
        src[:, 2] = 0.0
        dst = src.copy()
        dst[:, 0] = -dst[:, 0]  # a reflection of the source
        dst += rng.normal(scale=0.01, size=dst.shape)
        rot, _ = solve_rigid(pair_set(src, dst))
        assert abs(np.linalg.det(rot.as_matrix()) - 1.0) < 1e-9


def test_solve_rejects_collinear_points():
    t = np.linspace(0.0, 1.0, 5)
    line = np.column_stack([t, t, t])
    with pytest.raises(DegenerateGeometryError):
        solve_rigid(pair_set(line, line + np.array([0.3, 0.1, 0.0])))


def test_solve_matches_one_dof_grid_oracle(rng):
    """Cross-check the closed-form solve against a brute-force rotation grid."""
    src = rng.normal(size=(30, 3))
    truth_angle = 37.0
    truth = Rotation.from_axis_angle([1.0, 0.0, 0.0], truth_angle)
    pairs = pair_set(src, truth.apply(src))

    grid = np.arange(-180.0, 180.0, 2.0)
    errors = []
    for ang in grid:
        r = Rotation.from_axis_angle([1.0, 0.0, 0.0], float(ang))
        diff = pairs.scene_points - r.apply(pairs.model_points)
        errors.append(float(np.sum(diff * diff)))
    best_grid = float(grid[int(np.argmin(errors))])

    rot, _ = solve_rigid(pairs)
    assert abs(rot.angle_deg() - abs(best_grid)) <= 2.0
    assert abs(rot.angle_deg() - truth_angle) < 1e-9


# -- gravity penalty and bias ---------------------------------------


def test_gravity_penalty_identities():
    aligned = GravityPrior(effective_weight=1.0)
    assert gravity_penalty(Rotation.identity(), aligned) < 1e-12
    quarter = Rotation.from_axis_angle([1.0, 0.0, 0.0], 90.0)
    assert abs(gravity_penalty(quarter, aligned) - 1.0) < 1e-12
    flipped = Rotation.from_axis_angle([1.0, 0.0, 0.0], 180.0)
    double = GravityPrior(effective_weight=2.0)
    assert abs(gravity_penalty(flipped, double) - 4.0) < 1e-12


def test_penalty_equals_quadratic_form(rng):
    """gamma*(1 - cos) must equal the half-squared-distance form exactly."""
    for _ in range(100):
        rot = random_rotation(rng)
        prior = GravityPrior(
            gravity_world=unit_vector(rng.normal(size=3)),
            upright_model=unit_vector(rng.normal(size=3)),
            effective_weight=float(rng.uniform(0.0, 3.0)),
        )
        quad = objective_value(
            PairSet.empty(), RigidTransform(rot, np.zeros(3)), prior
        )
        assert abs(gravity_penalty(rot, prior) - quad) < 1e-9


def test_zero_weight_bias_equals_plain_solve(rng):
    src = rng.normal(size=(50, 3))
    truth = random_transform(rng)
    pairs = pair_set(src, truth.apply(src))
    prior = GravityPrior(effective_weight=0.0)
    plain_rot, plain_tr = solve_rigid(pairs)
    bias_rot, bias_tr = apply_bias(pairs, prior, RigidTransform.identity())
    assert geodesic_angle(plain_rot, bias_rot) < 1e-12
    assert np.allclose(plain_tr, bias_tr, atol=1e-12)


def test_corrective_full_bias_erases_tilt():
    tilted = RigidTransform(Rotation.from_axis_angle([0.0, 1.0, 0.0], 35.0), np.zeros(3))
    prior = GravityPrior(upright_bias=1.0, effective_weight=1.0)
    rot, tr = apply_bias(PairSet.empty(), prior, tilted, mode="corrective")
    after = rot.compose(tilted.rotation)
    assert tilt_angle(after, prior.upright_model, prior.gravity_world) < 1e-6
    assert np.linalg.norm(tr) < 1e-12


def test_corrective_handles_full_inversion():
    flipped = RigidTransform(Rotation.from_axis_angle([1.0, 0.0, 0.0], 180.0), np.zeros(3))
    prior = GravityPrior(upright_bias=1.0, effective_weight=1.0)
    rot, _ = apply_bias(PairSet.empty(), prior, flipped, mode="corrective")
    after = rot.compose(flipped.rotation)
    assert tilt_angle(after, prior.upright_model, prior.gravity_world) < 1e-6


def test_penalty_solve_matches_tilt_grid_oracle(rng):
    """The augmented solve must land on the brute-force minimizer of the
    combined data + gravity objective over a 1-degree tilt grid."""
    src = rng.normal(scale=0.4, size=(200, 3))
    data_angle = 25.0
    truth = Rotation.from_axis_angle([1.0, 0.0, 0.0], data_angle)
    pairs = pair_set(src, truth.apply(src))
    prior = GravityPrior(effective_weight=30.0)  # strong pull toward upright

    rot, _ = apply_bias(pairs, prior, RigidTransform.identity(), mode="penalty")

    grid = np.arange(-90.0, 90.0, 1.0)
    values = []
    for ang in grid:
        r = Rotation.from_axis_angle([1.0, 0.0, 0.0], float(ang))
        t = pairs.scene_points.mean(axis=0) - r.apply(pairs.model_points.mean(axis=0))
        values.append(objective_value(pairs, RigidTransform(r, t), prior))
    best_grid = float(grid[int(np.argmin(values))])

    assert 0.0 < best_grid < data_angle  # the prior visibly drags the optimum
    assert abs(rot.angle_deg() - abs(best_grid)) <= 2.0


def test_apply_bias_rejects_unknown_mode(rng):
    pairs = pair_set(rng.normal(size=(5, 3)), rng.normal(size=(5, 3)))
    with pytest.raises(ValueError):
        apply_bias(pairs, GravityPrior(), RigidTransform.identity(), mode="nope")


# -- project_yaw / converged / score --------------------------------


def test_project_yaw_passthrough():
    delta = Rotation.from_axis_angle([1.0, 0.0, 0.0], 20.0)
    assert project_yaw(delta, UP, False) is delta


def test_project_yaw_keeps_pure_yaw():
    delta = Rotation.yaw(30.0)
    proj = project_yaw(delta, UP, True)
    assert geodesic_angle(proj, delta) < 1e-9


def test_project_yaw_extracts_twist():
    delta = Rotation.from_axis_angle([1.0, 0.0, 0.0], 20.0).compose(Rotation.yaw(40.0))
    proj = project_yaw(delta, UP, True)
    assert geodesic_angle(proj, Rotation.yaw(40.0)) < 1e-6


def test_project_yaw_pure_swing_maps_to_identity():
    delta = Rotation.from_axis_angle([1.0, 0.0, 0.0], 90.0)
    assert project_yaw(delta, UP, True).angle_deg() < 1e-9


def test_converged_thresholds():
    assert converged(Rotation.identity(), np.zeros(3), 0.05, 0.0005)
    assert not converged(Rotation.yaw(1.0), np.zeros(3), 0.05, 0.0005)
    assert converged(Rotation.yaw(0.01), np.array([0.0004, 0.0, 0.0]), 0.05, 0.0005)
    assert not converged(Rotation.identity(), np.array([0.001, 0.0, 0.0]), 0.05, 0.0005)


def test_score_pose_extremes(rng):
    model = oriented_cloud(rng, n=80)
    ident = RigidTransform.identity()
    assert abs(score_pose(model, ident, model.points, 0.25) - 1.0) < 1e-12
    far = RigidTransform(Rotation.identity(), np.array([100.0, 0.0, 0.0]))
    assert score_pose(model, far, model.points, 0.25) == 0.0


def test_score_pose_zero_at_cap_distance():
    model = OrientedSampleSet(np.zeros((4, 3)), np.tile(UP, (4, 1)))
    cap = 0.25
    scene = np.tile([cap, 0.0, 0.0], (6, 1))
    score = score_pose(model, RigidTransform.identity(), scene, cap)
    assert abs(score) < 1e-12  # inlier fraction 1, normalized RMS 1


def test_objective_value_identities(rng):
    pts = rng.normal(size=(10, 3))
    aligned = pair_set(pts, pts)
    assert objective_value(aligned, RigidTransform.identity()) < 1e-12
    one = pair_set(np.zeros((1, 3)), np.array([[2.0, 0.0, 0.0]]))
    assert abs(objective_value(one, RigidTransform.identity()) - 2.0) < 1e-12


# -- run_registration -----------------------------------------------


def quick_params(**over):
    base = dict(
        sample_count=200,
        max_iterations=30,
        restarts=2,
        seed=0,
    )
    base.update(over)
    return IcpParams(**base)


def test_registration_from_truth_converges_fast(crate_mesh):
    pose = RigidTransform(Rotation.yaw(25.0), np.array([0.4, -0.2, 0.0]))
    scene = sample_mesh_with_normals(crate_mesh, 500, seed=2).transformed(pose).points
    result = run_registration(crate_mesh, pose, scene, quick_params(restarts=1))
    assert result.converged
    assert result.iterations <= 2
    assert result.score > 0.99


def test_registration_recovers_small_offset(crate_mesh):
    truth = RigidTransform(Rotation.yaw(10.0), np.array([0.1, 0.1, 0.0]))
    scene = sample_mesh_with_normals(crate_mesh, 600, seed=3).transformed(truth).points
    init = RigidTransform(
        Rotation.from_axis_angle([1.0, 0.0, 0.0], 8.0).compose(truth.rotation),
        truth.translation + np.array([0.02, -0.01, 0.01]),
    )
    result = run_registration(crate_mesh, init, scene, quick_params())
    assert geodesic_angle(result.pose.rotation, truth.rotation) < 2.0
    assert np.linalg.norm(result.pose.translation - truth.translation) < 0.01


def test_registration_deterministic_bit_for_bit(crate_mesh):
    truth = RigidTransform(Rotation.yaw(15.0), np.zeros(3))
    scene = sample_mesh_with_normals(crate_mesh, 400, seed=5).transformed(truth).points
    init = RigidTransform(Rotation.yaw(30.0), np.array([0.02, 0.0, 0.0]))
    a = run_registration(crate_mesh, init, scene, quick_params())
    b = run_registration(crate_mesh, init, scene, quick_params())
    assert a.as_dict() == b.as_dict()


def test_zero_weight_prior_gets_out_of_the_way(crate_mesh):
    """With zero gravity weight and zero bias the two arms are bit-identical."""
    truth = RigidTransform(Rotation.yaw(15.0), np.zeros(3))
    scene = sample_mesh_with_normals(crate_mesh, 400, seed=6).transformed(truth).points
    init = RigidTransform(Rotation.from_axis_angle([0.0, 1.0, 0.0], 10.0), np.zeros(3))
    plain = run_registration(crate_mesh, init, scene, quick_params())
    neutral = GravityPrior(upright_bias=0.0, effective_weight=0.0)
    biased = run_registration(crate_mesh, init, scene, quick_params(), neutral)
    assert plain.as_dict() == biased.as_dict()


def test_trace_objective_never_increases_at_solve(crate_mesh):
    truth = RigidTransform(Rotation.yaw(5.0), np.zeros(3))
    scene = sample_mesh_with_normals(crate_mesh, 400, seed=7).transformed(truth).points
    init = RigidTransform(
        Rotation.from_axis_angle([1.0, 0.0, 0.0], 20.0).compose(truth.rotation),
        np.array([0.03, 0.0, 0.0]),
    )
    prior = GravityPrior(upright_bias=0.8, effective_weight=1.0)
    result = run_registration(
        crate_mesh, init, scene, quick_params(restarts=1), prior, collect_trace=True
    )
    assert result.trace, "trace requested but empty"
    for step in result.trace:
        assert step["objectiveAfter"] <= step["objectiveBefore"] + 1e-9


def test_registration_requires_scene_points(crate_mesh):
    with pytest.raises(InsufficientSceneError):
        run_registration(crate_mesh, RigidTransform.identity(), np.zeros((4, 3)), quick_params())


def test_registration_infeasible_reports_diagnostics(crate_mesh):
    scene = np.tile([50.0, 0.0, 0.0], (10, 1)) + np.random.default_rng(0).normal(
        scale=0.001, size=(10, 3)
    )
    with pytest.raises(InfeasibleRegistrationError) as exc:
        run_registration(crate_mesh, RigidTransform.identity(), scene, quick_params())
    assert exc.value.diagnostics
    assert all(not d.feasible for d in exc.value.diagnostics)


def test_flip_family_gravity_tilt_never_worse(cone_mesh):
    """Starting upside down, the gravity-biased arm's final tilt must not
    exceed the plain arm's in median over seeds."""
    scene_set = sample_mesh_with_normals(cone_mesh, 800, seed=0)
    flipped = RigidTransform(
        Rotation.from_axis_angle([1.0, 0.0, 0.0], 180.0), np.array([0.0, 0.0, 0.7])
    )
    prior = GravityPrior(upright_bias=0.8, effective_weight=1.0)
    plain_tilts, sg_tilts = [], []
    for seed in range(10):
        params = quick_params(seed=seed, restarts=2, max_iterations=25, sample_count=150)
        plain = run_registration(cone_mesh, flipped, scene_set.points, params)
        sg = run_registration(cone_mesh, flipped, scene_set.points, params, prior)
        plain_tilts.append(tilt_angle(plain.pose.rotation, UP, UP))
        sg_tilts.append(tilt_angle(sg.pose.rotation, UP, UP))
    assert np.median(sg_tilts) <= np.median(plain_tilts) + 1e-9
    assert np.median(sg_tilts) < 5.0


def test_yaw_only_prior_preserves_tilt(crate_mesh):
    truth = RigidTransform(Rotation.yaw(0.0), np.zeros(3))
    scene = sample_mesh_with_normals(crate_mesh, 400, seed=8).transformed(truth).points
    init_tilt = 12.0
    init = RigidTransform(Rotation.from_axis_angle([1.0, 0.0, 0.0], init_tilt), np.zeros(3))
    prior = GravityPrior(upright_bias=0.0, effective_weight=0.0, yaw_only=True)
    result = run_registration(crate_mesh, init, scene, quick_params(restarts=1), prior)
    final_tilt = tilt_angle(result.pose.rotation, UP, UP)
    assert abs(final_tilt - init_tilt) < 1e-6  # yaw-only updates cannot change tilt
