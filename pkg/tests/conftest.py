"""Shared fixtures: deterministic RNG and small reference geometry."""

import numpy as np
import pytest

from sitealign.geometry import RigidTransform, Rotation
from sitealign.mesh import sample_mesh_with_normals
from sitealign.scenes import PrimitiveSpec, make_primitive


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def crate_mesh():
    return make_primitive(PrimitiveSpec("box", {"sx": 0.45, "sy": 0.32, "sz": 0.26}, "crate"))


@pytest.fixture
def cone_mesh():
    return make_primitive(PrimitiveSpec("cone", {"radius": 0.18, "height": 0.7}, "cone"))


@pytest.fixture
def crate_samples(crate_mesh):
    return sample_mesh_with_normals(crate_mesh, 400, seed=11)


def random_rotation(rng) -> Rotation:
    """Uniform random rotation from a normalized random quaternion."""
    q = rng.normal(size=4)
    return Rotation(q[0], q[1], q[2], q[3])


def random_transform(rng, scale: float = 1.0) -> RigidTransform:
    return RigidTransform(random_rotation(rng), rng.normal(scale=scale, size=3))
