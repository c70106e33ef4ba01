"""Minimum-eigenvalue corner detection and depth back-projection.

Images are plain numpy arrays: grayscale as float rows in [0, 1], depth in
meters with 0 marking invalid pixels. Pixel coordinates are (x, y) with x
along columns, y along rows; (0, 0) is the top-left pixel center.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

__all__ = [
    "CameraIntrinsics",
    "Roi",
    "CornerParams",
    "spatial_gradients",
    "shi_tomasi_scores",
    "detect_corners",
    "backproject",
    "load_pgm",
    "load_depth_pgm",
    "save_pgm",
]


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole model: focal lengths and principal point, in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")

    def as_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy}

    @staticmethod
    def from_dict(d: dict) -> "CameraIntrinsics":
        return CameraIntrinsics(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]))


@dataclass(frozen=True)
class Roi:
    """Axis-aligned pixel rectangle: origin (x, y), size (width, height)."""

    x: int
    y: int
    width: int
    height: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("ROI must have positive size")
        if self.x < 0 or self.y < 0:
            raise ValueError("ROI origin must be non-negative")

    def clip_check(self, shape) -> None:
        h, w = shape
        if self.x + self.width > w or self.y + self.height > h:
            raise ValueError(f"ROI {self} exceeds image bounds {w}x{h}")

    @staticmethod
    def from_dict(d: dict) -> "Roi":
        return Roi(int(d["x"]), int(d["y"]), int(d["width"]), int(d["height"]))


@dataclass(frozen=True)
class CornerParams:
    """Detector knobs. ``tau`` is the min-eigenvalue acceptance threshold
    (useful range roughly 0.01 to 0.05 on unit-scaled images)."""

    tau: float = 0.01
    nms_radius: int = 3
    max_corners: int = 600
    window_radius: int = 2

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.nms_radius < 1 or self.window_radius < 1:
            raise ValueError("radii must be at least 1")
        if self.max_corners < 1:
            raise ValueError("max_corners must be positive")


def spatial_gradients(image: np.ndarray):
    """Sobel x/y gradients normalized by 1/8; border pixels are zero.

    Returns ``(ix, iy)`` with ``ix`` the horizontal (column-direction)
    derivative. Images smaller than 3x3 cannot support the stencil.
    """
    img = np.asarray(image, dtype=float)
    if img.ndim != 2 or img.shape[0] < 3 or img.shape[1] < 3:
        raise ValueError("image must be 2D and at least 3x3")
    ix = np.zeros_like(img)
    iy = np.zeros_like(img)
    ix[1:-1, 1:-1] = (
        (img[:-2, 2:] - img[:-2, :-2])
        + 2.0 * (img[1:-1, 2:] - img[1:-1, :-2])
        + (img[2:, 2:] - img[2:, :-2])
    ) / 8.0
    iy[1:-1, 1:-1] = (
        (img[2:, :-2] - img[:-2, :-2])
        + 2.0 * (img[2:, 1:-1] - img[:-2, 1:-1])
        + (img[2:, 2:] - img[:-2, 2:])
    ) / 8.0
    return ix, iy


def _box_sum(a: np.ndarray, radius: int) -> np.ndarray:
    """Sum over the (2r+1)^2 window, out-of-bounds treated as zero."""
    k = 2 * radius + 1
    padded = np.zeros((a.shape[0] + k, a.shape[1] + k))
    padded[radius + 1 : radius + 1 + a.shape[0], radius + 1 : radius + 1 + a.shape[1]] = a
    c = padded.cumsum(axis=0).cumsum(axis=1)
    return (
        c[k:, k:]
        - c[:-k, k:]
        - c[k:, :-k]
        + c[:-k, :-k]
    )


def shi_tomasi_scores(ix: np.ndarray, iy: np.ndarray, window_radius: int) -> np.ndarray:
    """Smaller eigenvalue of the gradient second-moment matrix per pixel.

    The window is a square box of radius ``window_radius``; sums are
    normalized by the full window area so scores are comparable across
    window sizes. For the symmetric 2x2 matrix [[a, b], [b, c]] the smaller
    eigenvalue has the closed form (a+c)/2 - sqrt(((a-c)/2)^2 + b^2).
    """
    area = float((2 * window_radius + 1) ** 2)
    sxx = _box_sum(ix * ix, window_radius) / area
    syy = _box_sum(iy * iy, window_radius) / area
    sxy = _box_sum(ix * iy, window_radius) / area
    half_tr = 0.5 * (sxx + syy)
    root = np.sqrt((0.5 * (sxx - syy)) ** 2 + sxy * sxy)
    return half_tr - root


def detect_corners(image: np.ndarray, roi: Roi, params: CornerParams) -> list[tuple[int, int, float]]:
    """Corners inside ``roi`` as (x, y, score), strongest first.

    A pixel survives when its score meets ``tau`` and strictly exceeds every
    other score within ``nms_radius`` (Euclidean), so no two detections land
    within the radius of each other. Ties in the final ordering break by
    (y, x) ascending; at most ``max_corners`` are returned.
    """
    img = np.asarray(image, dtype=float)
    roi.clip_check(img.shape)
    crop = img[roi.y : roi.y + roi.height, roi.x : roi.x + roi.width]
    if crop.shape[0] < 3 or crop.shape[1] < 3:
        return []
    ix, iy = spatial_gradients(crop)
    scores = shi_tomasi_scores(ix, iy, params.window_radius)

    r = params.nms_radius
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    footprint = (yy * yy + xx * xx) <= r * r
    footprint[r, r] = False  # compare against neighbors only
    neighbor_max = ndimage.maximum_filter(
        scores, footprint=footprint, mode="constant", cval=-np.inf
    )
    keep = (scores >= params.tau) & (scores > neighbor_max)
    ys, xs = np.nonzero(keep)
    found = [
        (int(x + roi.x), int(y + roi.y), float(scores[y, x]))
        for y, x in zip(ys, xs)
    ]
    found.sort(key=lambda c: (-c[2], c[1], c[0]))
    return found[: params.max_corners]


def backproject(pixels, depth: np.ndarray, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Lift pixel detections to camera-frame 3D points.

    Depth per pixel is the median of the valid (non-zero) values in its 3x3
    neighborhood; pixels whose neighborhood is entirely invalid are dropped.
    Output order follows input order.
    """
    depth = np.asarray(depth, dtype=float)
    out = []
    h, w = depth.shape
    for px in pixels:
        x, y = int(px[0]), int(px[1])
        if not (0 <= x < w and 0 <= y < h):
            continue
        patch = depth[max(0, y - 1) : y + 2, max(0, x - 1) : x + 2]
        valid = patch[patch > 0.0]
        if len(valid) == 0:
            continue
        z = float(np.median(valid))
        out.append(
            (
                (x - intrinsics.cx) * z / intrinsics.fx,
                (y - intrinsics.cy) * z / intrinsics.fy,
                z,
            )
        )
    return np.asarray(out, dtype=float).reshape(-1, 3)


# ---------------------------------------------------------------------------
# PGM I/O (P2 ASCII, P5 binary; 16-bit P5 is big-endian per the format)


def _read_pgm_raw(path):
    data = Path(path).read_bytes()
    # header: magic, width, height, maxval with comments allowed
    tokens = []
    pos = 0
    while len(tokens) < 4:
        m = re.match(rb"\s*(#[^\n]*\n|\S+)", data[pos:])
        if m is None:
            raise ValueError(f"{path}: truncated PGM header")
        pos += m.end()
        tok = m.group(1)
        if not tok.startswith(b"#"):
            tokens.append(tok)
    magic = tokens[0].decode("ascii")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic not in ("P2", "P5"):
        raise ValueError(f"{path}: unsupported PGM magic {magic!r}")
    if maxval <= 0 or maxval > 65535:
        raise ValueError(f"{path}: invalid maxval {maxval}")
    if magic == "P2":
        values = np.array(data[pos:].split(), dtype=np.uint32)
    else:
        # exactly one whitespace byte separates the maxval token from the raster
        if pos < len(data) and data[pos : pos + 1] in b" \t\r\n\v\f":
            pos += 1
        dt = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        avail = (len(data) - pos) // dt.itemsize
        values = np.frombuffer(data, dtype=dt, count=avail, offset=pos).astype(np.uint32)
    if values.size < width * height:
        raise ValueError(f"{path}: pixel data truncated")
    return values[: width * height].reshape(height, width), maxval


def load_pgm(path) -> np.ndarray:
    """Grayscale PGM scaled to floats in [0, 1]."""
    raw, maxval = _read_pgm_raw(path)
    return raw.astype(float) / float(maxval)


def load_depth_pgm(path) -> np.ndarray:
    """Depth PGM whose integer values are millimeters; returns meters."""
    raw, _ = _read_pgm_raw(path)
    return raw.astype(float) / 1000.0


def save_pgm(array: np.ndarray, path, maxval: int = 255, binary: bool = True) -> None:
    """Write integer image data (already in [0, maxval]) as P5 or P2."""
    arr = np.asarray(array)
    if np.issubdtype(arr.dtype, np.floating):
        arr = np.round(arr * maxval).astype(np.uint32)
    arr = np.clip(arr, 0, maxval).astype(np.uint32)
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n{maxval}\n" if binary else f"P2\n{arr.shape[1]} {arr.shape[0]}\n{maxval}\n"
    if binary:
        payload = arr.astype(">u2" if maxval > 255 else "u1").tobytes()
        Path(path).write_bytes(header.encode("ascii") + payload)
    else:
        rows = "\n".join(" ".join(str(int(v)) for v in row) for row in arr)
        Path(path).write_text(header + rows + "\n", encoding="ascii")


def perspective_project(points, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Inverse of ``backproject`` for valid depths: camera points to pixels."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = pts[:, 0] * intrinsics.fx / pts[:, 2] + intrinsics.cx
        v = pts[:, 1] * intrinsics.fy / pts[:, 2] + intrinsics.cy
    return np.column_stack([u, v])
