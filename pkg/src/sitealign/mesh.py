"""Triangle meshes and seeded surface sampling with per-sample normals."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyMeshError
from .geometry import RigidTransform, seeded_rng

__all__ = ["TriangleMesh", "OrientedSampleSet", "sample_mesh_with_normals"]

# Triangles smaller than this (in m^2) carry no usable area or normal.
DEGENERATE_AREA = 1e-12


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Indexed triangle soup: ``vertices`` (V, 3) float, ``triangles`` (T, 3) int."""

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        t = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if not np.all(np.isfinite(v)):
            raise ValueError("mesh vertices contain non-finite values")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise ValueError("triangle indices out of range")
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @classmethod
    def cleaned(cls, vertices, triangles, min_area: float = DEGENERATE_AREA) -> "TriangleMesh":
        """Build a mesh, dropping degenerate (near-zero-area) triangles."""
        mesh = cls(vertices, triangles)
        if len(mesh.triangles) == 0:
            return mesh
        keep = mesh.triangle_areas() >= min_area
        return cls(mesh.vertices, mesh.triangles[keep])

    # -- derived quantities -------------------------------------------

    def corners(self):
        """The three (T, 3) corner arrays of every triangle."""
        tri = self.triangles
        return self.vertices[tri[:, 0]], self.vertices[tri[:, 1]], self.vertices[tri[:, 2]]

    def triangle_areas(self) -> np.ndarray:
        a, b, c = self.corners()
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def face_normals(self) -> np.ndarray:
        """Unit normals per face; degenerate faces get a zero normal."""
        a, b, c = self.corners()
        n = np.cross(b - a, c - a)
        length = np.linalg.norm(n, axis=1, keepdims=True)
        safe = np.where(length < 1e-15, 1.0, length)
        return np.where(length < 1e-15, 0.0, n / safe)

    def area(self) -> float:
        return float(self.triangle_areas().sum())

    def bounds(self):
        """(min_corner, max_corner) of the vertex set."""
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def is_empty(self) -> bool:
        return len(self.triangles) == 0 or self.area() < DEGENERATE_AREA

    def transformed(self, pose: RigidTransform) -> "TriangleMesh":
        return TriangleMesh(pose.apply(self.vertices), self.triangles)

    @staticmethod
    def merged(meshes) -> "TriangleMesh":
        """Concatenate several meshes into one (indices re-offset)."""
        verts, tris, offset = [], [], 0
        for m in meshes:
            verts.append(m.vertices)
            tris.append(m.triangles + offset)
            offset += len(m.vertices)
        if not verts:
            return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
        return TriangleMesh(np.vstack(verts), np.vstack(tris))


@dataclass(frozen=True, eq=False)
class OrientedSampleSet:
    """Surface samples with matching outward unit normals."""

    points: np.ndarray
    normals: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float).reshape(-1, 3)
        n = np.asarray(self.normals, dtype=float).reshape(-1, 3)
        if len(p) != len(n):
            raise ValueError("points and normals must pair up one-to-one")
        p.setflags(write=False)
        n.setflags(write=False)
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "normals", n)

    def __len__(self) -> int:
        return len(self.points)

    def transformed(self, pose: RigidTransform) -> "OrientedSampleSet":
        """Move samples through a rigid motion; normals rotate only."""
        return OrientedSampleSet(pose.apply(self.points), pose.rotation.apply(self.normals))


def sample_mesh_with_normals(mesh: TriangleMesh, count: int, seed: int) -> OrientedSampleSet:
    """Draw ``count`` points on the surface, area-proportionally per triangle.

    Within each chosen triangle the point is uniform (barycentric draw with
    the standard fold so the unit square maps onto the triangle). The normal
    attached to each sample is the face normal of its source triangle. The
    same (mesh, count, seed) triple always reproduces the identical set.
    """
    if count <= 0:
        raise ValueError("sample count must be positive")
    areas = mesh.triangle_areas()
    usable = areas > DEGENERATE_AREA
    if mesh.is_empty() or not usable.any():
        raise EmptyMeshError("mesh has no triangles with usable area")

    rng = seeded_rng(seed)
    probs = np.where(usable, areas, 0.0)
    probs = probs / probs.sum()
    chosen = rng.choice(len(areas), size=count, p=probs)

    a, b, c = mesh.corners()
    u = rng.random(count)
    v = rng.random(count)
    fold = u + v > 1.0
    u[fold] = 1.0 - u[fold]
    v[fold] = 1.0 - v[fold]
    pts = (
        a[chosen]
        + u[:, None] * (b[chosen] - a[chosen])
        + v[:, None] * (c[chosen] - a[chosen])
    )
    return OrientedSampleSet(pts, mesh.face_normals()[chosen])
