import numpy as np
from skimage import measure

from ..errors import IsoOutOfRange
from ..mesh import TriangleMesh

# grid values closer than this (relative to the value range) to the iso level
# are pushed off it, so no output vertex lands exactly on a grid node
_NUDGE = 1e-7


def marching_cubes(grid, iso=0.0):
    """Extract the ``iso`` level set of a signed distance grid.

    Lewiner's topologically consistent variant of marching cubes with linear
    edge interpolation. Faces are wound so normals point towards increasing
    values, i.e. outward for a signed distance field. A level that the grid
    never crosses gives an empty mesh.
    """
    iso = float(iso)
    if not np.isfinite(iso):
        raise IsoOutOfRange(f"iso level must be finite, got {iso}")
    v = np.asarray(grid.values, dtype=np.float64)
    lo, hi = float(v.min()), float(v.max())
    if not lo < iso < hi:
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    eps = _NUDGE * (hi - lo)
    near = np.abs(v - iso) < eps
    if near.any():
        v = v.copy()
        v[near] = iso + eps
    verts, faces, _, _ = measure.marching_cubes(
        v, level=iso, spacing=grid.spec.spacing, gradient_direction="descent",
        method="lewiner", allow_degenerate=False)
    verts = verts.astype(np.float64) + np.asarray(grid.spec.origin)
    return TriangleMesh(verts, faces.astype(np.int64))
