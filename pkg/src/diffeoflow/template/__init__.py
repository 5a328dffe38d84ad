from .builder import TemplateBuildConfig, TemplateFamily, build_template, containment
from .marching import marching_cubes
from .remesh import isotropic_remesh
from .sdf import SdfGrid, common_bbox, mesh_to_sdf, sdf_union

__all__ = [
    "SdfGrid", "common_bbox", "mesh_to_sdf", "sdf_union", "marching_cubes",
    "isotropic_remesh", "TemplateBuildConfig", "TemplateFamily", "build_template",
    "containment",
]
