"""Point-to-surface queries: exact closest points, winding numbers, signed distance."""

import numpy as np

from ..errors import EmptyMesh, NotClosed
from .bvh import TriangleBVH, winding_kernel


class SurfaceLocator:
    """Exact nearest-surface queries against a fixed triangle mesh.

    Backed by a :class:`TriangleBVH`; each query walks the tree nearest box
    first and prunes boxes farther than the best triangle found so far, so
    results equal a brute-force scan over all faces.
    """

    def __init__(self, mesh):
        if mesh.n_faces == 0:
            raise EmptyMesh("cannot query an empty mesh")
        self.mesh = mesh
        self.bvh = TriangleBVH(mesh.vertices[mesh.faces])

    def query(self, points):
        """Return ``(distance, closest_point, face_id)`` for each query point."""
        return self.bvh.nearest(points)

    def distance(self, points):
        return self.query(points)[0]


def winding_number(points, mesh):
    """Generalized winding number of ``mesh`` around each point.

    Sum of signed solid angles of all faces (Van Oosterom and Strackee),
    divided by ``4 pi``. Close to 1 inside an outward-oriented closed mesh,
    0 outside.
    """
    pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
    out = np.empty(len(pts))
    winding_kernel(pts, np.ascontiguousarray(mesh.vertices[mesh.faces]), out)
    return out


def signed_distance(points, mesh, locator=None):
    """Exact distance to ``mesh``, negative where the winding number is >= 1/2."""
    if not mesh.is_closed:
        raise NotClosed("signed distance needs a closed mesh")
    loc = locator or SurfaceLocator(mesh)
    d = loc.distance(points)
    inside = winding_number(points, mesh) >= 0.5
    return np.where(inside, -d, d)
