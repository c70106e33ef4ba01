"""OBJ and PLY readers/writers."""

import numpy as np
import pytest

from sitealign.meshio import (
    load_mesh,
    load_obj,
    load_ply,
    load_ply_points,
    save_obj,
    save_ply,
    save_ply_points,
)
from sitealign.scenes import PrimitiveSpec, make_primitive

ALL_PRIMITIVES = [
    ("box", {"sx": 0.45, "sy": 0.32, "sz": 0.26}),
    ("cylinder", {"radius": 0.28, "height": 0.58}),
    ("cone", {"radius": 0.18, "height": 0.7}),
    ("tripod", {"spread": 0.16, "height": 0.45}),
    ("pallet", {"sx": 0.4, "sy": 0.4, "sz": 0.12}),
    ("scaffold", {"sx": 0.35, "sy": 0.35, "sz": 0.5}),
]


@pytest.mark.parametrize("kind,dims", ALL_PRIMITIVES)
def test_obj_round_trip(kind, dims, tmp_path):
    mesh = make_primitive(PrimitiveSpec(kind, dims))
    path = tmp_path / "m.obj"
    save_obj(mesh, path)
    back = load_obj(path)
    assert np.allclose(mesh.vertices, back.vertices, atol=1e-12)
    assert np.array_equal(mesh.triangles, back.triangles)


@pytest.mark.parametrize("kind,dims", ALL_PRIMITIVES)
def test_ply_ascii_round_trip_is_exact(kind, dims, tmp_path):
    mesh = make_primitive(PrimitiveSpec(kind, dims))
    path = tmp_path / "m.ply"
    save_ply(mesh, path, binary=False)
    back = load_ply(path)
    assert np.array_equal(mesh.vertices, back.vertices)
    assert np.array_equal(mesh.triangles, back.triangles)


@pytest.mark.parametrize("kind,dims", ALL_PRIMITIVES)
def test_ply_binary_round_trip(kind, dims, tmp_path):
    mesh = make_primitive(PrimitiveSpec(kind, dims))
    path = tmp_path / "m.ply"
    save_ply(mesh, path, binary=True)
    back = load_ply(path)
    assert np.allclose(mesh.vertices, back.vertices, atol=1e-6)  # float32 storage
    assert np.array_equal(mesh.triangles, back.triangles)


def test_obj_accepts_slash_attributes_and_fans(tmp_path):
    path = tmp_path / "quad.obj"
    path.write_text(
        "# comment line\n"
        "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n"
        "vn 0 0 1\n"
        "f 1/1/1 2/2/1 3/3/1 4/4/1\n"
    )
    mesh = load_obj(path)
    assert mesh.triangles.tolist() == [[0, 1, 2], [0, 2, 3]]


def test_obj_negative_indices(tmp_path):
    path = tmp_path / "neg.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n")
    mesh = load_obj(path)
    assert mesh.triangles.tolist() == [[0, 1, 2]]


def test_obj_rejects_short_vertex(tmp_path):
    path = tmp_path / "bad.obj"
    path.write_text("v 0 0\n")
    with pytest.raises(ValueError):
        load_obj(path)


def test_ply_points_round_trip_with_normals(tmp_path, rng):
    pts = rng.normal(size=(60, 3))
    nrm = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    for binary, atol in ((False, 1e-12), (True, 1e-6)):
        path = tmp_path / f"pts_{binary}.ply"
        save_ply_points(pts, path, normals=nrm, binary=binary)
        qp, qn = load_ply_points(path)
        assert np.allclose(pts, qp, atol=atol)
        assert np.allclose(nrm, qn, atol=atol)


def test_ply_points_without_normals(tmp_path, rng):
    pts = rng.normal(size=(10, 3))
    path = tmp_path / "plain.ply"
    save_ply_points(pts, path)
    qp, qn = load_ply_points(path)
    assert np.allclose(pts, qp, atol=1e-12)
    assert qn is None


def test_ply_header_comments_tolerated(tmp_path):
    path = tmp_path / "c.ply"
    path.write_text(
        "ply\nformat ascii 1.0\ncomment made by a scanner\n"
        "element vertex 3\nproperty double x\nproperty double y\nproperty double z\n"
        "element face 1\nproperty list uchar int vertex_indices\nend_header\n"
        "0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n"
    )
    mesh = load_ply(path)
    assert len(mesh.vertices) == 3
    assert mesh.triangles.tolist() == [[0, 1, 2]]


def test_ply_rejects_missing_magic(tmp_path):
    path = tmp_path / "bad.ply"
    path.write_text("not a ply\n")
    with pytest.raises(ValueError, match="magic"):
        load_ply(path)


def test_ply_rejects_unknown_format(tmp_path):
    path = tmp_path / "big.ply"
    path.write_text("ply\nformat binary_big_endian 1.0\nend_header\n")
    with pytest.raises(ValueError, match="format"):
        load_ply(path)


def test_load_mesh_dispatches_on_suffix(tmp_path, crate_mesh):
    p_obj, p_ply = tmp_path / "a.obj", tmp_path / "a.ply"
    save_obj(crate_mesh, p_obj)
    save_ply(crate_mesh, p_ply)
    assert np.allclose(load_mesh(p_obj).vertices, crate_mesh.vertices, atol=1e-12)
    assert np.allclose(load_mesh(p_ply).vertices, crate_mesh.vertices, atol=1e-12)
    with pytest.raises(ValueError, match="format"):
        load_mesh(tmp_path / "a.stl")


def test_missing_file_raises_oserror(tmp_path):
    with pytest.raises(OSError):
        load_obj(tmp_path / "missing.obj")
