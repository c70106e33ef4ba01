"""Synthetic desk-scale site scenes: primitives, partial views, presets.

Every primitive is built in its canonical frame: up is +z and the origin
sits at the center of the base footprint, so an identity pose means "object
standing upright on the ground plane".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import UP, RigidTransform, Rotation, rotation_between, seeded_rng, unit_vector
from .mesh import TriangleMesh, sample_mesh_with_normals

__all__ = [
    "PrimitiveSpec",
    "PlacedObject",
    "ScenarioSpec",
    "GeneratedScene",
    "make_primitive",
    "render_partial_view",
    "perturb_pose",
    "generate_scenario",
    "load_preset",
    "preset_names",
]

PRIMITIVE_KINDS = ("box", "cone", "cylinder", "tripod", "pallet", "scaffold")


@dataclass(frozen=True)
class PrimitiveSpec:
    """One catalog object: a primitive kind plus its dimensions and label."""

    kind: str
    dims: dict = field(default_factory=dict)
    label: str = ""

    def __post_init__(self):
        if self.kind not in PRIMITIVE_KINDS:
            raise ValueError(f"unknown primitive kind {self.kind!r}, expected one of {PRIMITIVE_KINDS}")


@dataclass(frozen=True)
class PlacedObject:
    """An object instance in a scenario: what it is and where it truly stands."""

    spec: PrimitiveSpec
    truth_pose: RigidTransform


@dataclass(frozen=True)
class ScenarioSpec:
    """Everything needed to regenerate a synthetic capture deterministically."""

    name: str
    objects: tuple
    viewpoint: np.ndarray
    noise_sigma: float = 0.002
    occlusion_fraction: float = 0.0
    density: float = 4000.0
    init_tilt_deg: float = 45.0
    init_yaw_deg: float = 30.0
    init_translation: float = 0.05
    seed: int = 0

    def __post_init__(self):
        vp = np.asarray(self.viewpoint, dtype=float).reshape(3)
        vp.setflags(write=False)
        object.__setattr__(self, "viewpoint", vp)
        object.__setattr__(self, "objects", tuple(self.objects))
        if not 0.0 <= self.occlusion_fraction < 1.0:
            raise ValueError("occlusion_fraction must be in [0, 1)")
        if self.density <= 0:
            raise ValueError("density must be positive")


@dataclass(frozen=True)
class GeneratedScene:
    """A rendered scenario: the union cloud plus per-object ground truth."""

    spec: ScenarioSpec
    scene_points: np.ndarray
    scene_normals: np.ndarray
    objects: tuple  # of PlacedObject
    meshes: tuple  # of TriangleMesh, parallel to objects
    initial_poses: tuple  # of RigidTransform, parallel to objects
    points_per_object: tuple  # surviving scene points contributed by each object


# ---------------------------------------------------------------------------
# primitive construction


def _box_mesh(sx: float, sy: float, sz: float, center=(0.0, 0.0, None)) -> TriangleMesh:
    """Axis-aligned box; by default the origin is the base-footprint center."""
    cx, cy, cz = center
    if cz is None:
        cz = sz / 2.0
    hx, hy, hz = sx / 2.0, sy / 2.0, sz / 2.0
    v = np.array(
        [
            [cx - hx, cy - hy, cz - hz],
            [cx + hx, cy - hy, cz - hz],
            [cx + hx, cy + hy, cz - hz],
            [cx - hx, cy + hy, cz - hz],
            [cx - hx, cy - hy, cz + hz],
            [cx + hx, cy - hy, cz + hz],
            [cx + hx, cy + hy, cz + hz],
            [cx - hx, cy + hy, cz + hz],
        ]
    )
    # 12 triangles, outward winding
    t = np.array(
        [
            [0, 2, 1], [0, 3, 2],  # bottom (-z)
            [4, 5, 6], [4, 6, 7],  # top (+z)
            [0, 1, 5], [0, 5, 4],  # -y
            [2, 3, 7], [2, 7, 6],  # +y
            [1, 2, 6], [1, 6, 5],  # +x
            [3, 0, 4], [3, 4, 7],  # -x
        ],
        dtype=np.int64,
    )
    return TriangleMesh(v, t)


def _cone_mesh(radius: float, height: float, segments: int = 32) -> TriangleMesh:
    ang = np.linspace(0.0, 2.0 * math.pi, segments, endpoint=False)
    ring = np.column_stack([radius * np.cos(ang), radius * np.sin(ang), np.zeros(segments)])
    apex = np.array([[0.0, 0.0, height]])
    base_center = np.array([[0.0, 0.0, 0.0]])
    verts = np.vstack([ring, apex, base_center])
    ia, ic = segments, segments + 1
    tris = []
    for i in range(segments):
        j = (i + 1) % segments
        tris.append([i, j, ia])  # lateral, outward
        tris.append([j, i, ic])  # base, downward
    return TriangleMesh(verts, np.asarray(tris, dtype=np.int64))


def _cylinder_mesh(radius: float, height: float, segments: int = 32) -> TriangleMesh:
    ang = np.linspace(0.0, 2.0 * math.pi, segments, endpoint=False)
    cx, cy = radius * np.cos(ang), radius * np.sin(ang)
    bottom = np.column_stack([cx, cy, np.zeros(segments)])
    top = np.column_stack([cx, cy, np.full(segments, height)])
    centers = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, height]])
    verts = np.vstack([bottom, top, centers])
    ib, it = 2 * segments, 2 * segments + 1
    tris = []
    for i in range(segments):
        j = (i + 1) % segments
        tris.append([i, j, segments + j])
        tris.append([i, segments + j, segments + i])
        tris.append([j, i, ib])  # bottom cap, downward
        tris.append([it, segments + i, segments + j])  # top cap, upward
    return TriangleMesh(verts, np.asarray(tris, dtype=np.int64))


def _posed(mesh: TriangleMesh, rotation: Rotation, translation) -> TriangleMesh:
    return mesh.transformed(RigidTransform(rotation, np.asarray(translation, dtype=float)))


def _tripod_mesh(spread: float, height: float, leg_radius: float | None = None) -> TriangleMesh:
    """Three slanted thin legs meeting under a small head box."""
    if leg_radius is None:
        leg_radius = max(height / 40.0, 0.008)
    apex = np.array([0.0, 0.0, height])
    parts = []
    for k in range(3):
        ang = 2.0 * math.pi * k / 3.0
        foot = np.array([spread * math.cos(ang), spread * math.sin(ang), 0.0])
        leg_vec = apex - foot
        leg_len = float(np.linalg.norm(leg_vec))
        leg = _cylinder_mesh(leg_radius, leg_len, segments=10)
        parts.append(_posed(leg, rotation_between(UP, leg_vec / leg_len), foot))
    head = height * 0.12
    parts.append(_box_mesh(head, head, head, center=(0.0, 0.0, height)))
    return TriangleMesh.merged(parts)


def _pallet_mesh(sx: float, sy: float, sz: float) -> TriangleMesh:
    """Slatted pallet: three floor skids topped by five deck boards."""
    skid_h = sz * 0.55
    deck_h = sz - skid_h
    skid_w = sx * 0.14
    parts = []
    for fx in (-0.5 + 0.07, 0.0, 0.5 - 0.07):
        parts.append(_box_mesh(skid_w, sy, skid_h, center=(fx * sx, 0.0, skid_h / 2.0)))
    deck_w = sy * 0.16
    for fy in np.linspace(-0.5 + 0.08, 0.5 - 0.08, 5):
        parts.append(_box_mesh(sx, deck_w, deck_h, center=(0.0, fy * sy, skid_h + deck_h / 2.0)))
    return TriangleMesh.merged(parts)


def _scaffold_mesh(sx: float, sy: float, sz: float) -> TriangleMesh:
    """Open frame: four corner posts, top rails, and mid-height rails."""
    post = max(min(sx, sy) * 0.07, 0.012)
    parts = []
    for fx in (-0.5, 0.5):
        for fy in (-0.5, 0.5):
            parts.append(_box_mesh(post, post, sz, center=(fx * (sx - post), fy * (sy - post), sz / 2.0)))
    rail = post * 0.8
    for frac in (0.5, 1.0):
        z = sz * frac - rail / 2.0
        parts.append(_box_mesh(sx, rail, rail, center=(0.0, -(sy - post) / 2.0, z)))
        parts.append(_box_mesh(sx, rail, rail, center=(0.0, (sy - post) / 2.0, z)))
        parts.append(_box_mesh(rail, sy, rail, center=(-(sx - post) / 2.0, 0.0, z)))
        parts.append(_box_mesh(rail, sy, rail, center=((sx - post) / 2.0, 0.0, z)))
    return TriangleMesh.merged(parts)


def make_primitive(spec: PrimitiveSpec) -> TriangleMesh:
    """Build the canonical mesh for a primitive spec (up +z, base at origin)."""
    d = spec.dims
    if spec.kind == "box":
        return _box_mesh(d.get("sx", 0.3), d.get("sy", 0.3), d.get("sz", 0.3))
    if spec.kind == "cone":
        return _cone_mesh(d.get("radius", 0.2), d.get("height", 0.7), int(d.get("segments", 32)))
    if spec.kind == "cylinder":
        return _cylinder_mesh(d.get("radius", 0.15), d.get("height", 0.4), int(d.get("segments", 32)))
    if spec.kind == "tripod":
        return _tripod_mesh(d.get("spread", 0.2), d.get("height", 0.5), d.get("legRadius"))
    if spec.kind == "pallet":
        return _pallet_mesh(d.get("sx", 0.4), d.get("sy", 0.4), d.get("sz", 0.12))
    if spec.kind == "scaffold":
        return _scaffold_mesh(d.get("sx", 0.35), d.get("sy", 0.35), d.get("sz", 0.5))
    raise ValueError(f"unhandled primitive kind {spec.kind!r}")


# ---------------------------------------------------------------------------
# capture simulation


def render_partial_view(
    mesh: TriangleMesh,
    pose: RigidTransform,
    viewpoint,
    density: float,
    noise_sigma: float,
    seed: int,
    *,
    return_normals: bool = False,
):
    """Simulate a single-viewpoint capture of a posed mesh.

    Surface samples are drawn area-proportionally at ``density`` points per
    square meter, back faces are culled (a point survives when its outward
    normal faces the viewpoint), and isotropic Gaussian noise of
    ``noise_sigma`` meters is added to surviving points.
    """
    if density <= 0:
        raise ValueError("density must be positive")
    viewpoint = np.asarray(viewpoint, dtype=float).reshape(3)
    count = max(1, int(round(mesh.area() * density)))
    samples = sample_mesh_with_normals(mesh, count, seed).transformed(pose)
    facing = np.einsum("ij,ij->i", samples.normals, viewpoint - samples.points) > 0.0
    pts = samples.points[facing]
    if noise_sigma > 0.0:
        noise_rng = seeded_rng(seed, stream=2)
        pts = pts + noise_rng.normal(0.0, noise_sigma, pts.shape)
    if return_normals:
        return pts, samples.normals[facing]
    return pts


def perturb_pose(
    truth: RigidTransform,
    tilt_deg: float,
    yaw_deg: float,
    translation: float,
    seed: int,
) -> RigidTransform:
    """Disturb a pose: seeded-random tilt axis, yaw about gravity, offset.

    The tilt magnitude is exact: starting from an upright truth pose the
    perturbed body reads exactly ``tilt_deg`` of tilt (180 produces the
    upside-down flip). The tilt axis direction, and the translation
    direction, are the only random draws.
    """
    rng = seeded_rng(seed, stream=3)
    phi = rng.uniform(0.0, 2.0 * math.pi)
    axis = np.array([math.cos(phi), math.sin(phi), 0.0])
    offset_dir = rng.normal(size=3)
    offset = translation * unit_vector(offset_dir) if translation > 0.0 else np.zeros(3)
    disturb = Rotation.from_axis_angle(axis, tilt_deg).compose(Rotation.yaw(yaw_deg))
    return RigidTransform(disturb.compose(truth.rotation), truth.translation + offset)


def _occlude(points: np.ndarray, normals: np.ndarray, owners: np.ndarray, fraction: float, seed: int):
    """Delete the points inside a seeded half-space slab.

    The slab normal is a random direction; its two bounding planes are
    placed at projection quantiles ``[a, a + fraction]`` with a seeded
    start ``a``, so the removed share lands on the requested fraction
    exactly (up to quantile ties).
    """
    if fraction <= 0.0 or len(points) == 0:
        return points, normals, owners
    rng = seeded_rng(seed, stream=4)
    direction = unit_vector(rng.normal(size=3))
    start = rng.uniform(0.0, 1.0 - fraction)
    proj = points @ direction
    lo = np.quantile(proj, start)
    hi = np.quantile(proj, start + fraction)
    keep = (proj < lo) | (proj > hi)
    return points[keep], normals[keep], owners[keep]


def generate_scenario(spec: ScenarioSpec) -> GeneratedScene:
    """Render a full scenario: union cloud, occlusion, per-object poses."""
    master = seeded_rng(spec.seed, stream=5)
    sub = master.integers(0, 2**62, size=2 * len(spec.objects) + 1)

    meshes, clouds, normal_sets, owner_sets, initial_poses = [], [], [], [], []
    for i, placed in enumerate(spec.objects):
        mesh = make_primitive(placed.spec)
        meshes.append(mesh)
        pts, nrm = render_partial_view(
            mesh,
            placed.truth_pose,
            spec.viewpoint,
            spec.density,
            spec.noise_sigma,
            int(sub[i]),
            return_normals=True,
        )
        clouds.append(pts)
        normal_sets.append(nrm)
        owner_sets.append(np.full(len(pts), i, dtype=np.int64))
        initial_poses.append(
            perturb_pose(
                placed.truth_pose,
                spec.init_tilt_deg,
                spec.init_yaw_deg,
                spec.init_translation,
                int(sub[len(spec.objects) + i]),
            )
        )

    points = np.vstack(clouds) if clouds else np.zeros((0, 3))
    normals = np.vstack(normal_sets) if normal_sets else np.zeros((0, 3))
    owners = np.concatenate(owner_sets) if owner_sets else np.zeros(0, dtype=np.int64)
    points, normals, owners = _occlude(points, normals, owners, spec.occlusion_fraction, int(sub[-1]))

    counts = tuple(int((owners == i).sum()) for i in range(len(spec.objects)))
    return GeneratedScene(
        spec=spec,
        scene_points=points,
        scene_normals=normals,
        objects=tuple(spec.objects),
        meshes=tuple(meshes),
        initial_poses=tuple(initial_poses),
        points_per_object=counts,
    )


# ---------------------------------------------------------------------------
# presets


def _standing(x: float, y: float, yaw_deg: float = 0.0) -> RigidTransform:
    return RigidTransform(Rotation.yaw(yaw_deg), np.array([x, y, 0.0]))


_CRATE = PrimitiveSpec("box", {"sx": 0.45, "sy": 0.32, "sz": 0.26}, "Wooden_Crate_450mm")
_BARREL = PrimitiveSpec("cylinder", {"radius": 0.28, "height": 0.58}, "Storage_Barrel_Blue_580mm")
_CONE = PrimitiveSpec("cone", {"radius": 0.18, "height": 0.7}, "Traffic_Cone_Orange_70cm")
_TRIPOD = PrimitiveSpec("tripod", {"spread": 0.16, "height": 0.45}, "Survey_Tripod_Aluminum_450mm")
_PALLET = PrimitiveSpec("pallet", {"sx": 0.4, "sy": 0.4, "sz": 0.12}, "Wooden_Pallet_EUR_400mm")
_SCAFFOLD = PrimitiveSpec("scaffold", {"sx": 0.35, "sy": 0.35, "sz": 0.5}, "Scaffold_Frame_Steel_500mm")
# The flip study uses a smaller site cone so the upside-down basin stays
# genuinely attractive for the unaided solver.
_SMALL_CONE = PrimitiveSpec("cone", {"radius": 0.12, "height": 0.35}, "Traffic_Cone_Orange_35cm")

_COMMON_SET = (
    PlacedObject(_CRATE, _standing(0.0, 0.0, 15.0)),
    PlacedObject(_BARREL, _standing(1.1, 0.2)),
    PlacedObject(_CONE, _standing(0.3, 1.1)),
)

_PRESETS: dict[str, ScenarioSpec] = {
    # One shared object arrangement observed from three viewpoints.
    "scenario1": ScenarioSpec(
        name="scenario1",
        objects=_COMMON_SET,
        viewpoint=(2.2, -0.4, 1.2),
        noise_sigma=0.002,
        occlusion_fraction=0.2,
        init_tilt_deg=40.0,
        init_yaw_deg=40.0,
        init_translation=0.05,
    ),
    "scenario2": ScenarioSpec(
        name="scenario2",
        objects=_COMMON_SET,
        viewpoint=(-0.3, 2.4, 1.5),
        noise_sigma=0.002,
        occlusion_fraction=0.0,
        init_tilt_deg=8.0,
        init_yaw_deg=15.0,
        init_translation=0.02,
    ),
    "scenario3": ScenarioSpec(
        name="scenario3",
        objects=_COMMON_SET,
        viewpoint=(-1.9, -1.5, 1.4),
        noise_sigma=0.002,
        occlusion_fraction=0.15,
        init_tilt_deg=40.0,
        init_yaw_deg=25.0,
        init_translation=0.04,
    ),
    # Families with weak geometric texture (thin members, slats, frames).
    "scenario4": ScenarioSpec(
        name="scenario4",
        objects=(
            PlacedObject(_TRIPOD, _standing(0.0, 0.0)),
            PlacedObject(_PALLET, _standing(1.0, 0.1, 25.0)),
            PlacedObject(_SCAFFOLD, _standing(0.2, 1.1, -10.0)),
            PlacedObject(_CONE, _standing(1.1, 1.0)),
        ),
        viewpoint=(2.0, -1.3, 1.1),
        noise_sigma=0.002,
        occlusion_fraction=0.15,
        init_tilt_deg=25.0,
        init_yaw_deg=30.0,
        init_translation=0.04,
    ),
    # Upside-down initialization study: a tripod and a cone, flipped 180.
    "flip": ScenarioSpec(
        name="flip",
        objects=(
            PlacedObject(_TRIPOD, _standing(0.0, 0.0)),
            PlacedObject(_SMALL_CONE, _standing(1.0, 0.0)),
        ),
        viewpoint=(2.1, 0.8, 1.0),
        noise_sigma=0.0015,
        occlusion_fraction=0.0,
        init_tilt_deg=180.0,
        init_yaw_deg=20.0,
        init_translation=0.02,
    ),
}


def preset_names() -> list[str]:
    return sorted(_PRESETS)


def load_preset(name: str, seed: int | None = None, **overrides) -> ScenarioSpec:
    """Fetch a preset by name, optionally re-seeded or field-overridden."""
    if name not in _PRESETS:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    spec = _PRESETS[name]
    if seed is not None:
        spec = replace(spec, seed=int(seed))
    if overrides:
        spec = replace(spec, **overrides)
    return spec
