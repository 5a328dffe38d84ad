from .bvh import TriangleBVH
from .geometry import SurfaceLocator, signed_distance, winding_number
from .shapes import cube, icosahedron, icosphere, tetrahedron, torus, wrinkled_sphere
from .io import read_mesh, read_obj, read_ply, write_mesh, write_obj, write_ply
from .ops import (
    EdgeSet,
    SurfaceSamples,
    dihedral_deviation,
    edge_set,
    euler_characteristic,
    laplacian_smooth,
    max_dihedral_deviation,
    sample_surface_uniform,
    subdivide_midpoint,
)
from .trimesh import TriangleMesh, build_mesh, concatenate

__all__ = [
    "TriangleMesh", "build_mesh", "concatenate",
    "EdgeSet", "SurfaceSamples", "edge_set", "euler_characteristic", "laplacian_smooth",
    "subdivide_midpoint", "sample_surface_uniform", "dihedral_deviation",
    "max_dihedral_deviation",
    "TriangleBVH", "SurfaceLocator", "signed_distance", "winding_number",
    "cube", "icosahedron", "icosphere", "tetrahedron", "torus", "wrinkled_sphere",
    "read_mesh", "write_mesh", "read_obj", "write_obj", "read_ply", "write_ply",
]
