"""Smooth genus-0 templates that wrap a set of training surfaces."""

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ContainmentFailure, EmptyInput, NotClosed, TopologyFailure
from ..mesh import (
    SurfaceLocator,
    laplacian_smooth,
    max_dihedral_deviation,
    signed_distance,
    subdivide_midpoint,
)
from .marching import marching_cubes
from .remesh import isotropic_remesh
from .sdf import common_bbox, mesh_to_sdf, sdf_union

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TemplateBuildConfig:
    """Template construction settings.

    The grid has cubic voxels with ``resolution`` nodes along the longest
    axis of the joint bounding box. Lengths given as ``None`` are resolved
    against it: ``tau`` to one voxel, ``target_edge_length`` to two voxels
    and ``containment_tol`` to the voxel diagonal.
    """

    resolution: int = 512
    tau: float | None = None
    margin_voxels: int = 4
    smooth_iterations: int = 10
    smooth_lambda: float = 0.5
    target_edge_length: float | None = None
    remesh_iterations: int = 5
    levels: int = 3
    containment_tol: float | None = None

    def __post_init__(self):
        if int(self.resolution) < 8:
            raise ValueError("resolution must be at least 8")
        if self.tau is not None and not self.tau >= 0:
            raise ValueError("tau must be non-negative")
        if self.levels < 1:
            raise ValueError("need at least one template level")
        if not 0 < self.smooth_lambda <= 1:
            raise ValueError("smooth_lambda must lie in (0, 1]")
        if self.smooth_iterations < 0 or self.remesh_iterations < 0:
            raise ValueError("iteration counts must be non-negative")
        if self.target_edge_length is not None and not self.target_edge_length > 0:
            raise ValueError("target_edge_length must be positive")

    def to_dict(self):
        return asdict(self)


@dataclass
class TemplateFamily:
    """Templates of increasing resolution; ``levels[0]`` is the coarsest.

    Every level traces the same surface since midpoint subdivision leaves
    vertices in place and adds new ones on existing edges.
    """

    levels: list
    grid: object
    stats: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, i):
        return self.levels[i]


def containment(template, meshes):
    """Largest signed distance of any training vertex to ``template``."""
    loc = SurfaceLocator(template)
    return max(float(signed_distance(m.vertices, template, locator=loc).max()) for m in meshes)


def build_template(training_meshes, config=None):
    """Build a multi-resolution template enclosing every training mesh.

    Pipeline: joint grid, per-mesh signed distances, union by pointwise
    minimum, iso-surface at ``tau``, largest component, Laplacian smoothing,
    isotropic remeshing and repeated midpoint subdivision.

    Raises
    ------
    EmptyInput, NotClosed
        Bad training input.
    TopologyFailure
        Some level has Euler characteristic other than 2.
    ContainmentFailure
        A training vertex lies outside the template by more than the tolerance.
    """
    cfg = config or TemplateBuildConfig()
    meshes = list(training_meshes)
    if not meshes:
        raise EmptyInput("build_template needs at least one training mesh")
    for i, m in enumerate(meshes):
        if not m.is_closed:
            raise NotClosed(f"training mesh {i} is not closed")

    spec = common_bbox(meshes, margin_voxels=cfg.margin_voxels, resolution=cfg.resolution,
                       isotropic=True)
    voxel = float(max(spec.spacing))
    tau = voxel if cfg.tau is None else float(cfg.tau)
    edge = 2.0 * voxel if cfg.target_edge_length is None else float(cfg.target_edge_length)
    tol = spec.voxel_diagonal if cfg.containment_tol is None else float(cfg.containment_tol)
    if tau > cfg.margin_voxels * voxel:
        logger.warning("tau exceeds the grid margin; the iso-surface may be clipped")

    union = sdf_union(mesh_to_sdf(m, spec) for m in meshes)
    raw = marching_cubes(union, iso=tau)
    if raw.n_faces == 0:
        raise TopologyFailure("iso-surface is empty")
    raw = raw.largest_component()
    chi_raw = raw.euler_characteristic()
    if chi_raw != 2:
        raise TopologyFailure(f"iso-surface has Euler characteristic {chi_raw}, expected 2")

    dihedral_before = max_dihedral_deviation(raw)
    smooth = laplacian_smooth(raw, cfg.smooth_iterations, cfg.smooth_lambda)
    dihedral_after = max_dihedral_deviation(smooth)
    base = isotropic_remesh(smooth, edge, iterations=cfg.remesh_iterations)

    levels = [base]
    for _ in range(cfg.levels - 1):
        levels.append(subdivide_midpoint(levels[-1], 1))
    chis = [lv.euler_characteristic() for lv in levels]
    if any(c != 2 for c in chis):
        raise TopologyFailure(f"template Euler characteristics {chis}, expected 2")

    worst = containment(base, meshes)
    stats = {
        "grid": {"dims": list(spec.dims), "origin": list(spec.origin), "spacing": list(spec.spacing)},
        "tau": tau,
        "target_edge_length": edge,
        "euler_characteristic": chis,
        "n_vertices": [lv.n_vertices for lv in levels],
        "n_faces": [lv.n_faces for lv in levels],
        "max_dihedral_deviation_pre_smoothing": dihedral_before,
        "max_dihedral_deviation_post_smoothing": dihedral_after,
        "containment_max_signed_distance": worst,
        "containment_tolerance": tol,
    }
    logger.info("template: %s faces, containment %.4g (tol %.4g)", stats["n_faces"], worst, tol)
    if worst > tol:
        raise ContainmentFailure(
            f"training vertex at signed distance {worst:.6g} outside template (tolerance {tol:.6g})")
    return TemplateFamily(levels, spec, stats)
