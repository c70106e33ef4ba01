"""Triangle meshes and area-weighted surface sampling."""

import math

import numpy as np
import pytest

from conftest import random_transform
from sitealign.errors import EmptyMeshError
from sitealign.mesh import OrientedSampleSet, TriangleMesh, sample_mesh_with_normals
from sitealign.scenes import PrimitiveSpec, make_primitive

UNIT_RIGHT_TRIANGLE = TriangleMesh(
    [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], [[0, 1, 2]]
)


def test_vertices_and_triangles_are_immutable():
    mesh = UNIT_RIGHT_TRIANGLE
    with pytest.raises(ValueError):
        mesh.vertices[0, 0] = 5.0
    with pytest.raises(ValueError):
        mesh.triangles[0, 0] = 2


def test_out_of_range_indices_rejected():
    with pytest.raises(ValueError):
        TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 3]])


def test_nonfinite_vertices_rejected():
    with pytest.raises(ValueError):
        TriangleMesh([[0, 0, np.nan], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])


def test_triangle_area_and_normal():
    mesh = UNIT_RIGHT_TRIANGLE
    assert abs(mesh.area() - 0.5) < 1e-12
    assert np.allclose(mesh.face_normals(), [[0.0, 0.0, 1.0]], atol=1e-12)


def test_cleaned_drops_degenerate_triangles():
    mesh = TriangleMesh.cleaned(
        [[0, 0, 0], [1, 0, 0], [0, 1, 0], [2, 0, 0]],
        [[0, 1, 2], [0, 1, 3]],  # second triangle is collinear
    )
    assert len(mesh.triangles) == 1


def test_merged_reoffsets_indices():
    a = UNIT_RIGHT_TRIANGLE
    b = TriangleMesh([[5, 0, 0], [6, 0, 0], [5, 1, 0]], [[0, 1, 2]])
    merged = TriangleMesh.merged([a, b])
    assert len(merged.vertices) == 6
    assert merged.triangles[1].tolist() == [3, 4, 5]
    assert abs(merged.area() - 1.0) < 1e-12


def test_box_mesh_area_closed_form():
    mesh = make_primitive(PrimitiveSpec("box", {"sx": 0.4, "sy": 0.3, "sz": 0.2}))
    expected = 2 * (0.4 * 0.3 + 0.4 * 0.2 + 0.3 * 0.2)
    assert abs(mesh.area() - expected) < 1e-12


def test_cylinder_area_near_closed_form_at_64_segments():
    r, h = 0.28, 0.58
    mesh = make_primitive(
        PrimitiveSpec("cylinder", {"radius": r, "height": h, "segments": 64})
    )
    expected = 2.0 * math.pi * r * (r + h)
    assert abs(mesh.area() - expected) / expected < 0.02


def test_cone_base_sits_at_origin():
    mesh = make_primitive(PrimitiveSpec("cone", {"radius": 0.18, "height": 0.7}))
    lo, hi = mesh.bounds()
    assert abs(lo[2]) < 1e-12
    assert abs(hi[2] - 0.7) < 1e-12


def test_transformed_moves_vertices(rng):
    pose = random_transform(rng)
    mesh = UNIT_RIGHT_TRIANGLE
    moved = mesh.transformed(pose)
    assert np.allclose(moved.vertices, pose.apply(mesh.vertices), atol=1e-12)
    assert np.array_equal(moved.triangles, mesh.triangles)


def test_sampling_is_deterministic(crate_mesh):
    a = sample_mesh_with_normals(crate_mesh, 200, seed=3)
    b = sample_mesh_with_normals(crate_mesh, 200, seed=3)
    c = sample_mesh_with_normals(crate_mesh, 200, seed=4)
    assert np.array_equal(a.points, b.points)
    assert np.array_equal(a.normals, b.normals)
    assert not np.array_equal(a.points, c.points)


def test_samples_lie_on_surface(crate_mesh):
    from sitealign.evaluation import point_to_mesh_distances
    from sitealign.geometry import RigidTransform

    s = sample_mesh_with_normals(crate_mesh, 300, seed=5)
    d = point_to_mesh_distances(s.points, crate_mesh, RigidTransform.identity())
    assert d.max() < 1e-9


def test_sample_normals_are_unit(crate_samples):
    norms = np.linalg.norm(crate_samples.normals, axis=1)
    assert np.allclose(norms, 1.0, atol=1e-9)


def test_samples_split_area_proportionally():
    # two parallel triangles with a 1:4 area ratio
    mesh = TriangleMesh(
        [
            [0, 0, 0], [1, 0, 0], [0, 1, 0],
            [0, 0, 1], [2, 0, 1], [0, 2, 1],
        ],
        [[0, 1, 2], [3, 4, 5]],
    )
    s = sample_mesh_with_normals(mesh, 5000, seed=9)
    top = float(np.mean(s.points[:, 2] > 0.5))
    assert abs(top - 0.8) < 0.03  # binomial fluctuation at n=5000


def test_empty_mesh_raises():
    empty = TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    with pytest.raises(EmptyMeshError):
        sample_mesh_with_normals(empty, 10, seed=0)


def test_nonpositive_count_rejected(crate_mesh):
    with pytest.raises(ValueError):
        sample_mesh_with_normals(crate_mesh, 0, seed=0)


def test_oriented_set_transform_rotates_normals(crate_samples, rng):
    pose = random_transform(rng)
    moved = crate_samples.transformed(pose)
    assert np.allclose(moved.points, pose.apply(crate_samples.points), atol=1e-12)
    assert np.allclose(
        moved.normals, pose.rotation.apply(crate_samples.normals), atol=1e-12
    )
    assert np.allclose(np.linalg.norm(moved.normals, axis=1), 1.0, atol=1e-9)


def test_oriented_set_requires_matching_lengths():
    with pytest.raises(ValueError):
        OrientedSampleSet(np.zeros((3, 3)), np.zeros((2, 3)))
