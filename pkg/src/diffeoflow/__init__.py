"""Cortical surface reconstruction by chained, fitted stationary flow fields.

Subpackages and modules
-----------------------
mesh        triangle meshes, I/O, distance queries and surface operations
flow_field  regular grids, trilinear sampling and analytic test fields
integrator  Euler and RK4 integration of points and meshes
chain       multi-stage deformation chains and their manifests
template    signed distances, marching cubes, remeshing, template families
metrics     Chamfer, Hausdorff, normal consistency and self-intersections
fitter      gradient-based fitting of flow fields to target surfaces
cli         the ``diffeoflow`` command
"""

from .chain import (
    DeformationChain,
    Stage,
    apply_chain,
    cortical_thickness,
    load_manifest,
    save_manifest,
    white_to_pial,
)
from .errors import DiffeoflowError
from .flow_field import FlowField, GridSpec, analytic_field, load_field, save_field
from .integrator import IntegratorConfig, integrate_mesh, integrate_points
from .mesh import TriangleMesh, read_mesh, write_mesh
from .metrics import MetricsReport, evaluate_surfaces

__version__ = "0.1.0"

__all__ = [
    "DeformationChain", "Stage", "apply_chain", "cortical_thickness", "load_manifest",
    "save_manifest", "white_to_pial", "DiffeoflowError", "FlowField", "GridSpec",
    "analytic_field", "load_field", "save_field", "IntegratorConfig", "integrate_mesh",
    "integrate_points", "TriangleMesh", "read_mesh", "write_mesh", "MetricsReport",
    "evaluate_surfaces",
]
