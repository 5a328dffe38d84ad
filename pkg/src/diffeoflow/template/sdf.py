import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from ..errors import DegenerateExtent, EmptyInput, MeshOutsideGrid, NotClosed, SpecMismatch
from ..flow_field import GridSpec
from ..mesh.geometry import SurfaceLocator, winding_number

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SdfGrid:
    """Signed distances sampled at the nodes of ``spec``; negative inside."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != tuple(self.spec.dims):
            raise ValueError(f"values shape {v.shape} does not match grid dims {self.spec.dims}")
        if not np.all(np.isfinite(v)):
            raise ValueError("signed distances must be finite")
        object.__setattr__(self, "values", v)


def common_bbox(meshes, margin_voxels=2, resolution=128, isotropic=False):
    """Grid over the joint bounding box of ``meshes``.

    Each axis gets ``resolution`` nodes; the box is padded by
    ``margin_voxels`` node spacings on every side.

    With ``isotropic`` every voxel is a cube: ``resolution`` nodes span the
    longest axis and the other axes get just enough nodes to cover their
    extent plus the margin, centred on the box. Shapes that are thin along
    some axis otherwise get a margin there far smaller than the largest
    voxel.
    """
    meshes = list(meshes)
    if not meshes:
        raise EmptyInput("common_bbox needs at least one mesh")
    res = np.broadcast_to(np.asarray(resolution, int), (3,))
    if res.min() < 8:
        raise ValueError("grid resolution must be at least 8 per axis")
    pts = np.concatenate([m.vertices for m in meshes])
    lo, hi = pts.min(0), pts.max(0)
    ext = hi - lo
    if np.any(ext <= 1e-12 * max(1.0, float(np.abs(pts).max()))):
        raise DegenerateExtent(f"bounding box has zero extent along some axis: {ext}")
    cells = res - 1 - 2 * margin_voxels
    if cells.min() < 1:
        raise ValueError("margin leaves no interior cells")
    if isotropic:
        h = float(np.max(ext / cells))
        inner = np.ceil(ext / h - 1e-9).astype(int)
        dims = inner + 1 + 2 * margin_voxels
        lo = lo - 0.5 * (inner * h - ext) - margin_voxels * h
        return GridSpec(tuple(dims), tuple(lo), (h, h, h))
    spacing = ext / cells
    lo = lo - margin_voxels * spacing
    return GridSpec(tuple(res), tuple(lo), tuple(spacing))


def _sign_components(dist, spec):
    """Label grid nodes that provably share an inside/outside state.

    Two neighbouring nodes ``p, q`` are joined when ``d(p) + d(q) > |p - q|``:
    every point of the segment between them is then at positive distance from
    the surface, so the segment cannot cross it.
    """
    dims = spec.dims
    flat = dist.ravel()
    idx = np.arange(flat.size).reshape(dims)
    rows, cols = [], []
    for axis in range(3):
        s = spec.spacing[axis]
        a = np.take(idx, np.arange(dims[axis] - 1), axis=axis).ravel()
        b = np.take(idx, np.arange(1, dims[axis]), axis=axis).ravel()
        ok = flat[a] + flat[b] > s * (1.0 + 1e-9)
        rows.append(a[ok])
        cols.append(b[ok])
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    g = sparse.csr_matrix((np.ones(len(r), dtype=np.int8), (r, c)), shape=(flat.size, flat.size))
    return connected_components(g, directed=False)


def mesh_to_sdf(mesh, spec, locator=None):
    """Signed distance of every grid node to a closed mesh.

    Unsigned distances are exact (see :class:`SurfaceLocator`). Signs use the
    generalized winding number (inside when >= 1/2), evaluated once per group
    of nodes whose connecting grid edges cannot cross the surface.
    """
    if not mesh.is_closed:
        raise NotClosed("signed distance grids need closed meshes")
    tol = 1e-9 * spec.diameter
    if np.any(mesh.vertices < spec.lower - tol) or np.any(mesh.vertices > spec.upper + tol):
        raise MeshOutsideGrid("mesh extends beyond the grid bounds")
    loc = locator or SurfaceLocator(mesh)
    nodes = spec.node_positions().reshape(-1, 3)
    dist = loc.distance(nodes).reshape(spec.dims)
    n_comp, labels = _sign_components(dist, spec)
    # lowest node index of each component
    _, first = np.unique(labels, return_index=True)
    w = winding_number(nodes[first], mesh)
    inside = (w >= 0.5)[labels].reshape(spec.dims)
    logger.debug("sdf: %d sign components for %d nodes", n_comp, labels.size)
    return SdfGrid(spec, np.where(inside, -dist, dist))


def sdf_union(grids):
    """Pointwise minimum of signed distance grids sharing one :class:`GridSpec`."""
    grids = list(grids)
    if not grids:
        raise EmptyInput("sdf_union needs at least one grid")
    spec = grids[0].spec
    for g in grids[1:]:
        if g.spec != spec:
            raise SpecMismatch("all grids in a union must share the same GridSpec")
    return SdfGrid(spec, np.minimum.reduce([g.values for g in grids]))
