"""Mesh loading, normalization, and surface-sampling tests."""

import struct

import numpy as np
import pytest

from cndhf.mesh_io import (
    TriangleMesh,
    load_mesh,
    normalize_to_unit_cube,
    sample_surface_points,
    save_obj,
)

from shapes import box, single_triangle


def _write_stl(path, mesh: TriangleMesh):
    corners = mesh.corners().astype("<f4")
    with open(path, "wb") as fh:
        fh.write(b"\0" * 80)
        fh.write(struct.pack("<I", len(corners)))
        for tri in corners:
            fh.write(b"\0" * 12)  # normal, ignored by the loader
            fh.write(tri.tobytes())
            fh.write(b"\0\0")


def test_single_triangle_obj_area(tmp_path):
    p = tmp_path / "tri.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
    mesh, diag = load_mesh(p)
    assert mesh.total_area == pytest.approx(0.5, rel=1e-12)
    assert diag.degenerate_triangle_count == 0


def test_cube_stl_area(tmp_path):
    p = tmp_path / "cube.stl"
    _write_stl(p, box(half_extents=(0.5, 0.5, 0.5)))
    mesh, _ = load_mesh(p)
    assert mesh.num_triangles == 12
    assert mesh.total_area == pytest.approx(6.0, rel=1e-12)


def test_obj_bad_index_rejected(tmp_path):
    p = tmp_path / "bad.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n")
    with pytest.raises(ValueError, match="invalid index"):
        load_mesh(p)


def test_obj_polygon_fan_and_slash_refs(tmp_path):
    p = tmp_path / "quad.obj"
    p.write_text(
        "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n"
        "vn 0 0 1\nvt 0 0\n"
        "f 1/1/1 2/1/1 3/1/1 4/1/1\n"
    )
    mesh, _ = load_mesh(p)
    assert mesh.num_triangles == 2
    assert mesh.total_area == pytest.approx(1.0, rel=1e-12)


def test_obj_negative_indices(tmp_path):
    p = tmp_path / "neg.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n")
    mesh, _ = load_mesh(p)
    assert mesh.total_area == pytest.approx(0.5, rel=1e-12)


def test_unsupported_format(tmp_path):
    p = tmp_path / "mesh.ply"
    p.write_text("ply\n")
    with pytest.raises(ValueError, match="unsupported format"):
        load_mesh(p)


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_mesh("/nonexistent/mesh.obj")


def test_zero_triangle_file(tmp_path):
    p = tmp_path / "points.obj"
    p.write_text("v 0 0 0\nv 1 0 0\n")
    with pytest.raises(ValueError, match="zero triangles"):
        load_mesh(p)


def test_degenerate_and_duplicate_diagnostics(tmp_path):
    p = tmp_path / "dd.obj"
    p.write_text(
        "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 2 0 0\n"
        "f 1 2 3\nf 1 2 3\nf 1 2 4\n"  # duplicate face and a collinear one
    )
    mesh, diag = load_mesh(p)
    assert diag.duplicate_triangle_count == 1
    assert diag.degenerate_triangle_count == 1
    assert mesh.per_triangle_area[2] == 0.0


def test_area_invariants():
    mesh = box(half_extents=(0.3, 0.4, 0.5))
    corners = mesh.corners()
    cross = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    ref = 0.5 * np.linalg.norm(cross, axis=1)
    assert np.allclose(mesh.per_triangle_area, ref, rtol=1e-9)
    assert mesh.total_area == pytest.approx(mesh.per_triangle_area.sum(), rel=1e-9)


def test_normalize_cube():
    mesh = box(half_extents=(1.0, 1.0, 1.0), center=(1.0, 1.0, 1.0))  # (0,0,0)-(2,2,2)
    out, transform = normalize_to_unit_cube(mesh)
    lo, hi = out.bounds()
    assert np.allclose(lo, -0.95, atol=1e-12)
    assert np.allclose(hi, 0.95, atol=1e-12)
    assert transform.scale == pytest.approx(0.95)
    roundtrip = transform.invert(out.vertices)
    assert np.allclose(roundtrip, mesh.vertices, atol=1e-12)


def test_normalize_identity_for_normalized_mesh():
    mesh = box(half_extents=(0.95, 0.4, 0.2))
    out, transform = normalize_to_unit_cube(mesh)
    assert transform.scale == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(transform.center, 0.0, atol=1e-12)
    assert np.allclose(out.vertices, mesh.vertices, atol=1e-12)


def test_normalize_zero_extent_rejected():
    verts = np.zeros((3, 3))
    mesh = TriangleMesh.from_arrays(verts, np.array([[0, 1, 2]]))
    with pytest.raises(ValueError, match="zero extent"):
        normalize_to_unit_cube(mesh)


def test_normalize_idempotent():
    mesh = box(half_extents=(0.2, 0.7, 0.4), center=(3.0, -2.0, 0.5))
    once, _ = normalize_to_unit_cube(mesh)
    twice, t2 = normalize_to_unit_cube(once)
    assert np.allclose(once.vertices, twice.vertices, atol=1e-9)
    assert t2.scale == pytest.approx(1.0, abs=1e-12)


def test_sampling_single_triangle_centroid_first():
    mesh = single_triangle()
    samples = sample_surface_points(mesh, seed=0)
    assert len(samples) >= 5
    assert np.allclose(samples.barycentric[0], 1.0 / 3.0, atol=1e-15)
    recon = np.einsum(
        "sk,skj->sj", samples.barycentric, mesh.corners()[samples.triangle_id]
    )
    assert np.allclose(recon, samples.position, atol=1e-9)


def test_sampling_equal_areas_equal_counts():
    verts = np.array(
        [[0, 0, 0], [1, 0, 0], [0, 1, 0], [2, 0, 0], [3, 0, 0], [2, 1, 0]],
        dtype=np.float64,
    )
    faces = np.array([[0, 1, 2], [3, 4, 5]])
    mesh = TriangleMesh.from_arrays(verts, faces)
    samples = sample_surface_points(mesh, seed=1)
    counts = np.bincount(samples.triangle_id, minlength=2)
    assert counts[0] == counts[1]


def test_sampling_area_proportional():
    # one triangle with 10x the area of the other
    verts = np.array(
        [[0, 0, 0], [1, 0, 0], [0, 1, 0], [2, 0, 0], [2 + np.sqrt(10), 0, 0],
         [2, np.sqrt(10), 0]],
        dtype=np.float64,
    )
    faces = np.array([[0, 1, 2], [3, 4, 5]])
    mesh = TriangleMesh.from_arrays(verts, faces)
    samples = sample_surface_points(mesh, seed=2)
    counts = np.bincount(samples.triangle_id, minlength=2)
    density = 5 * 2 / mesh.total_area
    expected = np.ceil(density * mesh.per_triangle_area)
    assert np.array_equal(counts, expected.astype(int))
    assert counts[1] >= 9 * counts[0]


def test_sampling_total_budget():
    rng = np.random.default_rng(0)
    verts = rng.normal(size=(30, 3))
    faces = rng.integers(0, 30, size=(40, 3))
    # drop accidental degenerate index triples for clean area bookkeeping
    ok = (faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2]) & (faces[:, 0] != faces[:, 2])
    mesh = TriangleMesh.from_arrays(verts, faces[ok])
    samples = sample_surface_points(mesh, seed=3)
    n_t = mesh.num_triangles
    assert 5 * n_t <= len(samples) <= 6 * n_t


def test_sampling_deterministic():
    mesh = box()
    a = sample_surface_points(mesh, seed=42)
    b = sample_surface_points(mesh, seed=42)
    assert np.array_equal(a.position, b.position)
    c = sample_surface_points(mesh, seed=43)
    assert not np.array_equal(a.position, c.position)


def test_degenerate_triangle_gets_single_centroid_sample():
    verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [2, 2, 2], [3, 3, 3], [4, 4, 4]],
                     dtype=np.float64)
    faces = np.array([[0, 1, 2], [3, 4, 5]])
    mesh = TriangleMesh.from_arrays(verts, faces)
    samples = sample_surface_points(mesh, seed=0)
    counts = np.bincount(samples.triangle_id, minlength=2)
    assert counts[1] == 1


def test_save_obj_roundtrip(tmp_path):
    mesh = box(half_extents=(0.31, 0.45, 0.27), center=(0.01, -0.02, 0.03))
    p = tmp_path / "out.obj"
    save_obj(mesh, p)
    back, _ = load_mesh(p)
    assert np.array_equal(back.vertices, mesh.vertices)
    assert np.array_equal(back.triangles, mesh.triangles)
