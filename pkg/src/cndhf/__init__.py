"""Compact neural double-height-field (CN-DHF) shape representation toolkit."""

from .mesh_io import (
    MeshDiagnostics,
    NormalizeTransform,
    Ray,
    SurfaceSamples,
    TriangleMesh,
    build_bvh,
    load_mesh,
    normalize_to_unit_cube,
    sample_surface_points,
    save_obj,
)

__all__ = [
    "MeshDiagnostics",
    "NormalizeTransform",
    "Ray",
    "SurfaceSamples",
    "TriangleMesh",
    "build_bvh",
    "load_mesh",
    "normalize_to_unit_cube",
    "sample_surface_points",
    "save_obj",
]

__version__ = "0.1.0"
