"""Triangle mesh loading, validation, normalization, and surface sampling.

Supported inputs are ASCII Wavefront OBJ (only ``v``/``f`` records; polygonal
faces are fan-triangulated) and binary little-endian STL.  Meshes are plain
arrays; degenerate and duplicated triangles are tolerated and reported in a
diagnostics record rather than repaired.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bvh import BruteForceRayCaster, RayCaster

NORMALIZED_EXTENT = 1.9  # longest bounding-box side after normalization


@dataclass
class TriangleMesh:
    """Indexed triangle soup with cached per-triangle areas."""

    vertices: np.ndarray          # (V, 3) float64
    triangles: np.ndarray         # (T, 3) int64
    per_triangle_area: np.ndarray  # (T,) float64
    total_area: float

    @classmethod
    def from_arrays(cls, vertices, triangles) -> "TriangleMesh":
        vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        if triangles.size and triangles.max() >= len(vertices):
            raise ValueError("invalid index: face references a missing vertex")
        if triangles.size and triangles.min() < 0:
            raise ValueError("invalid index: negative vertex reference")
        areas = triangle_areas(vertices, triangles)
        return cls(vertices, triangles, areas, float(areas.sum()))

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    def bounds(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def corners(self) -> np.ndarray:
        """(T, 3, 3) triangle corner positions."""
        return self.vertices[self.triangles]

    def transformed(self, rotation=None, scale=1.0, offset=0.0) -> "TriangleMesh":
        v = self.vertices
        if rotation is not None:
            v = v @ np.asarray(rotation, dtype=np.float64).T
        v = v * scale + offset
        return TriangleMesh.from_arrays(v, self.triangles)


@dataclass
class MeshDiagnostics:
    degenerate_triangle_count: int
    duplicate_triangle_count: int


@dataclass
class SurfaceSamples:
    """Point samples on a mesh; the first sample of each triangle is its centroid."""

    triangle_id: np.ndarray  # (S,) int64
    barycentric: np.ndarray  # (S, 3) float64
    position: np.ndarray     # (S, 3) float64

    def __len__(self) -> int:
        return len(self.triangle_id)


@dataclass
class Ray:
    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64)
        self.direction = np.asarray(self.direction, dtype=np.float64)
        n = np.linalg.norm(self.direction)
        if abs(n - 1.0) > 1e-9:
            raise ValueError("ray direction must have unit norm")


@dataclass
class NormalizeTransform:
    """Map into normalized space: p_norm = (p - center) * scale."""

    scale: float
    center: np.ndarray  # (3,)

    def apply(self, points):
        return (np.asarray(points, dtype=np.float64) - self.center) * self.scale

    def invert(self, points):
        return np.asarray(points, dtype=np.float64) / self.scale + self.center

    def to_dict(self):
        return {"scale": self.scale, "center": [float(c) for c in self.center]}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["scale"]), np.array(d["center"], dtype=np.float64))


def triangle_areas(vertices, triangles) -> np.ndarray:
    corners = vertices[triangles]
    e1 = corners[:, 1] - corners[:, 0]
    e2 = corners[:, 2] - corners[:, 0]
    return 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------


def _parse_obj(text: str):
    vertices = []
    faces = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise ValueError(f"malformed vertex at line {line_no}")
            vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
        elif tag == "f":
            idx = []
            for token in parts[1:]:
                ref = token.split("/")[0]
                if not ref:
                    raise ValueError(f"malformed face at line {line_no}")
                i = int(ref)
                if i < 0:
                    i = len(vertices) + i
                else:
                    i = i - 1
                if i < 0 or i >= len(vertices):
                    raise ValueError(f"invalid index in face at line {line_no}")
                idx.append(i)
            if len(idx) < 3:
                raise ValueError(f"face with fewer than 3 vertices at line {line_no}")
            for k in range(1, len(idx) - 1):  # fan triangulation
                faces.append([idx[0], idx[k], idx[k + 1]])
        # normals, texcoords, materials, groups: ignored
    return np.array(vertices, dtype=np.float64), np.array(faces, dtype=np.int64)


def _parse_stl_binary(data: bytes):
    if len(data) < 84:
        raise ValueError("unsupported format: STL file too short")
    (count,) = struct.unpack_from("<I", data, 80)
    expected = 84 + 50 * count
    if len(data) < expected:
        raise ValueError("unsupported format: truncated binary STL")
    records = np.frombuffer(data, dtype=np.uint8, count=50 * count, offset=84)
    records = records.reshape(count, 50)
    tri_verts = (
        records[:, 12:48]
        .copy()
        .view("<f4")
        .reshape(count, 3, 3)
        .astype(np.float64)
    )
    flat = tri_verts.reshape(-1, 3)
    unique, inverse = np.unique(flat, axis=0, return_inverse=True)
    faces = inverse.reshape(count, 3).astype(np.int64)
    return unique, faces


def load_mesh(path) -> tuple[TriangleMesh, MeshDiagnostics]:
    """Load an OBJ or binary STL file; areas computed, nothing repaired."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    suffix = path.suffix.lower()
    if suffix == ".obj":
        vertices, faces = _parse_obj(path.read_text())
    elif suffix == ".stl":
        vertices, faces = _parse_stl_binary(path.read_bytes())
    else:
        raise ValueError(f"unsupported format: {suffix!r}")
    if len(faces) == 0:
        raise ValueError("mesh has zero triangles")
    mesh = TriangleMesh.from_arrays(vertices, faces)
    degenerate = int(np.count_nonzero(mesh.per_triangle_area == 0.0))
    keys = np.sort(faces, axis=1)
    _, counts = np.unique(keys, axis=0, return_counts=True)
    duplicates = int((counts - 1).sum())
    return mesh, MeshDiagnostics(degenerate, duplicates)


def save_obj(mesh: TriangleMesh, path) -> None:
    """Write an OBJ with deterministic shortest round-trip float formatting."""
    lines = []
    for v in mesh.vertices:
        lines.append(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}")
    for t in mesh.triangles:
        lines.append(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}")
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Normalization and sampling
# ---------------------------------------------------------------------------


def normalize_to_unit_cube(mesh: TriangleMesh):
    """Center the bounding box at the origin and scale its longest side to 1.9.

    The 0.05 margin per side keeps the surface strictly inside the raster UV
    domain and the height range for axis-aligned view directions.
    """
    lo, hi = mesh.bounds()
    extent = hi - lo
    longest = float(extent.max())
    if longest <= 0.0:
        raise ValueError("mesh has zero extent")
    scale = NORMALIZED_EXTENT / longest
    center = (lo + hi) / 2.0
    transform = NormalizeTransform(scale, center)
    out = TriangleMesh.from_arrays(transform.apply(mesh.vertices), mesh.triangles)
    return out, transform


def sample_surface_points(mesh: TriangleMesh, seed: int = 0) -> SurfaceSamples:
    """Area-proportional sampling with 5 * num_triangles points in total.

    Each triangle t receives ceil(n_p * area_t) samples (at least one), where
    n_p is the target point density; the first sample is always the centroid
    and the rest are uniform in barycentric space.
    """
    if mesh.num_triangles == 0:
        raise ValueError("mesh has zero triangles")
    n_points = 5 * mesh.num_triangles
    if mesh.total_area > 0.0:
        density = n_points / mesh.total_area
        counts = np.ceil(density * mesh.per_triangle_area).astype(np.int64)
    else:
        counts = np.zeros(mesh.num_triangles, dtype=np.int64)
    counts = np.maximum(counts, 1)

    rng = np.random.default_rng(seed)
    total = int(counts.sum())
    tri_id = np.repeat(np.arange(mesh.num_triangles, dtype=np.int64), counts)
    bary = np.empty((total, 3), dtype=np.float64)

    starts = np.concatenate(([0], np.cumsum(counts)))
    bary[starts[:-1]] = 1.0 / 3.0  # centroid first for every triangle

    random_rows = np.ones(total, dtype=bool)
    random_rows[starts[:-1]] = False
    n_rand = int(random_rows.sum())
    if n_rand:
        r1 = np.sqrt(rng.random(n_rand))
        r2 = rng.random(n_rand)
        bary[random_rows, 0] = 1.0 - r1
        bary[random_rows, 1] = r1 * (1.0 - r2)
        bary[random_rows, 2] = r1 * r2

    corners = mesh.corners()[tri_id]
    position = np.einsum("sk,skj->sj", bary, corners)
    return SurfaceSamples(tri_id, bary, position)


def build_bvh(mesh: TriangleMesh) -> RayCaster:
    """Ray-intersection accelerator; agrees exactly with the brute-force caster."""
    return RayCaster(mesh.vertices, mesh.triangles)


def build_brute_force(mesh: TriangleMesh) -> BruteForceRayCaster:
    return BruteForceRayCaster(mesh.vertices, mesh.triangles)
