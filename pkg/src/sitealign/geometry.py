"""Core 3D types: vectors, unit-quaternion rotations, rigid transforms.

Conventions used across the package:

* World "up" is +z. Gravity-related directions are expressed as the upward
  unit vector (the direction opposing gravity), not the downward pull.
* Angles at API boundaries are degrees; radians stay internal.
* All types are immutable after construction and safe to share.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "UP",
    "seeded_rng",
    "unit_vector",
    "Rotation",
    "RigidTransform",
    "compose",
    "geodesic_angle",
    "tilt_angle",
    "rotation_between",
]

# Upward unit vector of the world frame.
UP = np.array([0.0, 0.0, 1.0])

_NORM_EPS = 1e-12


def seeded_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based PRNG (Philox) so every stochastic op replays bit-for-bit.

    ``stream`` decorrelates draws made for different purposes under the same
    user-facing seed (sampling vs. noise vs. pose jitter).
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, int(stream) & 0xFFFFFFFFFFFFFFFF]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def unit_vector(v) -> np.ndarray:
    """Return ``v`` scaled to unit length, raising on near-zero input."""
    v = np.asarray(v, dtype=float).reshape(3)
    n = float(np.linalg.norm(v))
    if not math.isfinite(n) or n < _NORM_EPS:
        raise ValueError("cannot normalize a zero-length vector")
    return v / n


@dataclass(frozen=True)
class Rotation:
    """Rotation stored as a unit quaternion (w, x, y, z), scalar first.

    The constructor renormalizes, so drift from repeated composition never
    accumulates past one ulp-scale correction.
    """

    w: float = 1.0
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def __post_init__(self):
        n = math.sqrt(self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z)
        if not math.isfinite(n) or n < _NORM_EPS:
            raise ValueError("quaternion norm is zero or non-finite")
        if abs(n - 1.0) > 1e-15:
            object.__setattr__(self, "w", self.w / n)
            object.__setattr__(self, "x", self.x / n)
            object.__setattr__(self, "y", self.y / n)
            object.__setattr__(self, "z", self.z / n)

    # -- constructors -------------------------------------------------

    @staticmethod
    def identity() -> "Rotation":
        return Rotation(1.0, 0.0, 0.0, 0.0)

    @staticmethod
    def from_axis_angle(axis, angle_deg: float) -> "Rotation":
        """Rotation of ``angle_deg`` about ``axis`` (right-hand rule)."""
        a = unit_vector(axis)
        half = math.radians(angle_deg) / 2.0
        s = math.sin(half)
        return Rotation(math.cos(half), a[0] * s, a[1] * s, a[2] * s)

    @staticmethod
    def yaw(angle_deg: float) -> "Rotation":
        """Rotation about the world up axis."""
        return Rotation.from_axis_angle(UP, angle_deg)

    @staticmethod
    def from_matrix(m) -> "Rotation":
        """Quaternion from a 3x3 rotation matrix (largest-pivot branch)."""
        m = np.asarray(m, dtype=float)
        if m.shape != (3, 3):
            raise ValueError("rotation matrix must be 3x3")
        t = float(np.trace(m))
        if t > 0.0:
            s = math.sqrt(t + 1.0) * 2.0
            return Rotation(
                0.25 * s,
                (m[2, 1] - m[1, 2]) / s,
                (m[0, 2] - m[2, 0]) / s,
                (m[1, 0] - m[0, 1]) / s,
            )
        i = int(np.argmax(np.diag(m)))
        if i == 0:
            s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
            return Rotation(
                (m[2, 1] - m[1, 2]) / s,
                0.25 * s,
                (m[0, 1] + m[1, 0]) / s,
                (m[0, 2] + m[2, 0]) / s,
            )
        if i == 1:
            s = math.sqrt(1.0 - m[0, 0] + m[1, 1] - m[2, 2]) * 2.0
            return Rotation(
                (m[0, 2] - m[2, 0]) / s,
                (m[0, 1] + m[1, 0]) / s,
                0.25 * s,
                (m[1, 2] + m[2, 1]) / s,
            )
        s = math.sqrt(1.0 - m[0, 0] - m[1, 1] + m[2, 2]) * 2.0
        return Rotation(
            (m[1, 0] - m[0, 1]) / s,
            (m[0, 2] + m[2, 0]) / s,
            (m[1, 2] + m[2, 1]) / s,
            0.25 * s,
        )

    # -- algebra ------------------------------------------------------

    def compose(self, other: "Rotation") -> "Rotation":
        """``self * other``: apply ``other`` first, then ``self``."""
        w1, x1, y1, z1 = self.w, self.x, self.y, self.z
        w2, x2, y2, z2 = other.w, other.x, other.y, other.z
        return Rotation(
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        )

    def inverse(self) -> "Rotation":
        return Rotation(self.w, -self.x, -self.y, -self.z)

    def as_matrix(self) -> np.ndarray:
        w, x, y, z = self.w, self.x, self.y, self.z
        return np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
                [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
                [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
            ]
        )

    def apply(self, v) -> np.ndarray:
        """Rotate one point ``(3,)`` or a stack ``(N, 3)``."""
        v = np.asarray(v, dtype=float)
        m = self.as_matrix()
        if v.ndim == 1:
            return m @ v
        return v @ m.T

    def angle_deg(self) -> float:
        """Rotation magnitude in degrees, in [0, 180]."""
        vec = math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)
        return math.degrees(2.0 * math.atan2(vec, abs(self.w)))

    def as_dict(self) -> dict:
        return {"w": self.w, "x": self.x, "y": self.y, "z": self.z}

    @staticmethod
    def from_dict(d: dict) -> "Rotation":
        return Rotation(float(d["w"]), float(d["x"]), float(d["y"]), float(d["z"]))


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Proper rigid motion ``p -> R p + t`` (no scaling, no reflection)."""

    rotation: Rotation
    translation: np.ndarray

    def __post_init__(self):
        t = np.array(self.translation, dtype=float).reshape(3)
        t.setflags(write=False)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(Rotation.identity(), np.zeros(3))

    def apply(self, p) -> np.ndarray:
        """Map one point ``(3,)`` or a stack ``(N, 3)`` through the motion."""
        return self.rotation.apply(p) + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """``self o other``: apply ``other`` first, then ``self``."""
        return RigidTransform(
            self.rotation.compose(other.rotation),
            self.rotation.apply(other.translation) + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        rinv = self.rotation.inverse()
        return RigidTransform(rinv, -rinv.apply(self.translation))

    def as_dict(self) -> dict:
        return {
            "rotation": self.rotation.as_dict(),
            "translation": [float(c) for c in self.translation],
        }

    @staticmethod
    def from_dict(d: dict) -> "RigidTransform":
        return RigidTransform(
            Rotation.from_dict(d["rotation"]),
            np.asarray(d["translation"], dtype=float),
        )


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Composition ``a o b``: applying the result equals applying b, then a."""
    return a.compose(b)


def geodesic_angle(a: Rotation, b: Rotation) -> float:
    """Geodesic distance between two rotations, in degrees [0, 180]."""
    return a.compose(b.inverse()).angle_deg()


def tilt_angle(rotation: Rotation, upright_model, gravity_world) -> float:
    """Angle in degrees between the world gravity-up direction and the
    model's canonical up mapped through ``rotation``.

    0 means the body is upright in the world; 180 means fully inverted.
    """
    g0 = unit_vector(upright_model)
    gm = unit_vector(gravity_world)
    c = float(np.dot(gm, rotation.apply(g0)))
    return math.degrees(math.acos(max(-1.0, min(1.0, c))))


def rotation_between(a, b) -> Rotation:
    """Shortest-arc rotation mapping unit direction ``a`` onto ``b``.

    The antiparallel case is resolved deterministically by rotating 180
    degrees about an arbitrary axis orthogonal to ``a``.
    """
    a = unit_vector(a)
    b = unit_vector(b)
    c = float(np.dot(a, b))
    axis = np.cross(a, b)
    n = float(np.linalg.norm(axis))
    if n < _NORM_EPS:
        if c > 0.0:
            return Rotation.identity()
        # pick any direction orthogonal to a
        helper = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        axis = unit_vector(np.cross(a, helper))
        return Rotation.from_axis_angle(axis, 180.0)
    angle = math.degrees(math.atan2(n, c))
    return Rotation.from_axis_angle(axis / n, angle)
