"""Mesh and point-cloud file formats: Wavefront OBJ and PLY.

Only what field tooling actually exchanges is supported: ASCII OBJ with
``v``/``f`` records (1-based indices, optional ``/`` attribute slots,
polygon fan triangulation), and PLY in ASCII or binary little-endian with
float vertex coordinates, optional ``nx ny nz`` normals, and integer face
index lists. Degenerate triangles are dropped on load.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .mesh import TriangleMesh

__all__ = [
    "load_obj",
    "save_obj",
    "load_ply",
    "save_ply",
    "load_ply_points",
    "save_ply_points",
    "load_mesh",
]

_PLY_TYPES = {
    "char": ("b", np.int8),
    "int8": ("b", np.int8),
    "uchar": ("B", np.uint8),
    "uint8": ("B", np.uint8),
    "short": ("h", np.int16),
    "int16": ("h", np.int16),
    "ushort": ("H", np.uint16),
    "uint16": ("H", np.uint16),
    "int": ("i", np.int32),
    "int32": ("i", np.int32),
    "uint": ("I", np.uint32),
    "uint32": ("I", np.uint32),
    "float": ("f", np.float32),
    "float32": ("f", np.float32),
    "double": ("d", np.float64),
    "float64": ("d", np.float64),
}


# ---------------------------------------------------------------------------
# OBJ


def load_obj(path) -> TriangleMesh:
    """Read an ASCII OBJ mesh (``v`` and ``f`` records; everything else skipped)."""
    verts: list[list[float]] = []
    tris: list[list[int]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            tag = fields[0]
            if tag == "v":
                if len(fields) < 4:
                    raise ValueError(f"{path}:{lineno}: vertex needs 3 coordinates")
                verts.append([float(fields[1]), float(fields[2]), float(fields[3])])
            elif tag == "f":
                if len(fields) < 4:
                    raise ValueError(f"{path}:{lineno}: face needs at least 3 vertices")
                idx = []
                for tok in fields[1:]:
                    head = tok.split("/")[0]
                    i = int(head)
                    # OBJ indices are 1-based; negative counts back from the end
                    idx.append(i - 1 if i > 0 else len(verts) + i)
                for k in range(1, len(idx) - 1):
                    tris.append([idx[0], idx[k], idx[k + 1]])
    return TriangleMesh.cleaned(
        np.asarray(verts, dtype=float).reshape(-1, 3),
        np.asarray(tris, dtype=np.int64).reshape(-1, 3),
    )


def save_obj(mesh: TriangleMesh, path) -> None:
    """Write an ASCII OBJ with full-precision (round-trip exact) coordinates."""
    lines = []
    for v in mesh.vertices:
        lines.append(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}")
    for t in mesh.triangles:
        lines.append(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# PLY


def _parse_ply_header(fh):
    """Return (format, elements) where elements is a list of
    (name, count, [properties]) and each property is either
    ("scalar", type, name) or ("list", count_type, item_type, name)."""
    magic = fh.readline().strip()
    if magic != b"ply":
        raise ValueError("not a PLY file (missing 'ply' magic)")
    fmt = None
    elements = []
    while True:
        raw = fh.readline()
        if not raw:
            raise ValueError("unexpected end of PLY header")
        line = raw.decode("ascii").strip()
        if not line or line.startswith("comment") or line.startswith("obj_info"):
            continue
        fields = line.split()
        if fields[0] == "format":
            fmt = fields[1]
            if fmt not in ("ascii", "binary_little_endian"):
                raise ValueError(f"unsupported PLY format {fmt!r}")
        elif fields[0] == "element":
            elements.append((fields[1], int(fields[2]), []))
        elif fields[0] == "property":
            if not elements:
                raise ValueError("PLY property before any element")
            if fields[1] == "list":
                elements[-1][2].append(("list", fields[2], fields[3], fields[4]))
            else:
                elements[-1][2].append(("scalar", fields[1], fields[2]))
        elif fields[0] == "end_header":
            break
        else:
            raise ValueError(f"unrecognized PLY header line {line!r}")
    if fmt is None:
        raise ValueError("PLY header missing format line")
    return fmt, elements


def _read_ply_elements(path):
    """Parse a PLY file into {element_name: {prop_name: list/array}}."""
    with open(path, "rb") as fh:
        fmt, elements = _parse_ply_header(fh)
        out = {}
        if fmt == "ascii":
            text = fh.read().decode("ascii").split()
            pos = 0
            for name, count, props in elements:
                cols = {p[-1]: [] for p in props}
                for _ in range(count):
                    for p in props:
                        if p[0] == "scalar":
                            cols[p[2]].append(float(text[pos]))
                            pos += 1
                        else:
                            n = int(float(text[pos]))
                            pos += 1
                            cols[p[3]].append([int(float(x)) for x in text[pos : pos + n]])
                            pos += n
                out[name] = cols
        else:
            buf = fh.read()
            off = 0
            for name, count, props in elements:
                cols = {p[-1]: [] for p in props}
                fixed = all(p[0] == "scalar" for p in props)
                if fixed:
                    dt = np.dtype([(p[2], np.dtype(_PLY_TYPES[p[1]][1]).newbyteorder("<")) for p in props])
                    arr = np.frombuffer(buf, dtype=dt, count=count, offset=off)
                    off += dt.itemsize * count
                    for p in props:
                        cols[p[2]] = arr[p[2]].astype(float).tolist()
                else:
                    for _ in range(count):
                        for p in props:
                            if p[0] == "scalar":
                                code, _ = _PLY_TYPES[p[1]]
                                (val,) = struct.unpack_from("<" + code, buf, off)
                                off += struct.calcsize(code)
                                cols[p[2]].append(float(val))
                            else:
                                ccode, _ = _PLY_TYPES[p[1]]
                                icode, _ = _PLY_TYPES[p[2]]
                                (n,) = struct.unpack_from("<" + ccode, buf, off)
                                off += struct.calcsize(ccode)
                                vals = struct.unpack_from("<" + str(n) + icode, buf, off)
                                off += struct.calcsize(icode) * n
                                cols[p[3]].append([int(v) for v in vals])
                out[name] = cols
        return out


def load_ply(path) -> TriangleMesh:
    """Read a PLY mesh; vertex-only files yield a mesh with zero triangles."""
    data = _read_ply_elements(path)
    if "vertex" not in data:
        raise ValueError(f"{path}: PLY file has no vertex element")
    vx = data["vertex"]
    verts = np.column_stack([vx["x"], vx["y"], vx["z"]]).astype(float)
    tris: list[list[int]] = []
    if "face" in data:
        face_cols = data["face"]
        key = "vertex_indices" if "vertex_indices" in face_cols else "vertex_index"
        for poly in face_cols[key]:
            for k in range(1, len(poly) - 1):
                tris.append([poly[0], poly[k], poly[k + 1]])
    return TriangleMesh.cleaned(verts, np.asarray(tris, dtype=np.int64).reshape(-1, 3))


def save_ply(mesh: TriangleMesh, path, binary: bool = False) -> None:
    """Write a PLY mesh. ASCII uses double precision (lossless round trip);
    binary little-endian uses float32 coordinates."""
    nv, nf = len(mesh.vertices), len(mesh.triangles)
    coord_type = "float" if binary else "double"
    header = [
        "ply",
        "format binary_little_endian 1.0" if binary else "format ascii 1.0",
        f"element vertex {nv}",
        f"property {coord_type} x",
        f"property {coord_type} y",
        f"property {coord_type} z",
        f"element face {nf}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    if binary:
        with open(path, "wb") as fh:
            fh.write(("\n".join(header) + "\n").encode("ascii"))
            fh.write(mesh.vertices.astype("<f4").tobytes())
            for t in mesh.triangles:
                fh.write(struct.pack("<Biii", 3, int(t[0]), int(t[1]), int(t[2])))
    else:
        lines = header[:]
        for v in mesh.vertices:
            lines.append(f"{float(v[0])!r} {float(v[1])!r} {float(v[2])!r}")
        for t in mesh.triangles:
            lines.append(f"3 {t[0]} {t[1]} {t[2]}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def load_ply_points(path):
    """Read a PLY point cloud; returns (points, normals-or-None)."""
    data = _read_ply_elements(path)
    if "vertex" not in data:
        raise ValueError(f"{path}: PLY file has no vertex element")
    vx = data["vertex"]
    pts = np.column_stack([vx["x"], vx["y"], vx["z"]]).astype(float)
    normals = None
    if all(k in vx for k in ("nx", "ny", "nz")):
        normals = np.column_stack([vx["nx"], vx["ny"], vx["nz"]]).astype(float)
    return pts, normals


def save_ply_points(points, path, normals=None, binary: bool = False) -> None:
    """Write a vertex-only PLY cloud (float32), optionally with normals."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    header = [
        "ply",
        "format binary_little_endian 1.0" if binary else "format ascii 1.0",
        f"element vertex {len(pts)}",
        "property float x",
        "property float y",
        "property float z",
    ]
    cols = pts
    if normals is not None:
        header += ["property float nx", "property float ny", "property float nz"]
        cols = np.hstack([pts, np.asarray(normals, dtype=float).reshape(-1, 3)])
    header.append("end_header")
    if binary:
        with open(path, "wb") as fh:
            fh.write(("\n".join(header) + "\n").encode("ascii"))
            fh.write(cols.astype("<f4").tobytes())
    else:
        rows = [" ".join(f"{x:.9g}" for x in row) for row in cols.astype(np.float32)]
        Path(path).write_text("\n".join(header + rows) + "\n", encoding="ascii")


def load_mesh(path) -> TriangleMesh:
    """Load a mesh by file extension (.obj or .ply)."""
    suffix = Path(path).suffix.lower()
    if suffix == ".obj":
        return load_obj(path)
    if suffix == ".ply":
        return load_ply(path)
    raise ValueError(f"unsupported mesh format {suffix!r} (expected .obj or .ply)")
