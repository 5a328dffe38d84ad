from dataclasses import dataclass

import numpy as np
from scipy import sparse

from ..errors import EmptyMesh, NotClosed
from .trimesh import TriangleMesh


@dataclass(frozen=True)
class EdgeSet:
    """Unique undirected edges with their rest lengths in mm."""

    edges: np.ndarray
    rest_lengths: np.ndarray

    def __len__(self):
        return len(self.edges)


@dataclass(frozen=True)
class SurfaceSamples:
    points: np.ndarray
    normals: np.ndarray
    face_ids: np.ndarray
    seed: int | None = None

    def __len__(self):
        return len(self.points)


def edge_set(mesh):
    return EdgeSet(mesh.edges.copy(), mesh.edge_lengths())


def euler_characteristic(mesh):
    """V - E + F of a closed manifold mesh.

    Raises
    ------
    NotClosed
        If any edge does not have exactly two incident faces.
    """
    return mesh.euler_characteristic()


def laplacian_smooth(mesh, iterations, lam=0.5):
    """Uniform-weight (umbrella) Laplacian smoothing.

    Each iteration moves every vertex a fraction ``lam`` of the way towards
    the centroid of its one-ring: ``v <- v + lam * (mean(N(v)) - v)``. All
    vertices are updated simultaneously from the previous iterate.
    """
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    if not 0.0 < lam <= 1.0:
        raise ValueError("lambda must lie in (0, 1]")
    if iterations == 0:
        return mesh
    adj = mesh.adjacency
    deg = np.asarray(adj.sum(axis=1)).ravel()
    # isolated vertices stay put
    inv = np.where(deg > 0, 1.0 / np.where(deg > 0, deg, 1.0), 0.0)
    avg = sparse.diags(inv) @ adj
    stay = deg == 0
    v = np.array(mesh.vertices)
    for _ in range(iterations):
        centroid = avg @ v
        centroid[stay] = v[stay]
        v = v + lam * (centroid - v)
    return mesh.with_vertices(v)


def subdivide_midpoint(mesh, levels=1):
    """Split every face into four through its edge midpoints, ``levels`` times.

    New vertices are appended after the existing ones in the order of
    ``mesh.edges`` and tagged ``max(tags) + 1 + edge_index`` so every vertex
    keeps a unique provenance tag. Original vertices keep their positions and
    tags, which makes each level a refinement of the previous one.
    """
    if levels < 0:
        raise ValueError("levels must be >= 0")
    for _ in range(levels):
        if not mesh.is_closed:
            raise NotClosed("midpoint subdivision expects a closed manifold mesh")
        mesh = _subdivide_once(mesh)
    return mesh


def _subdivide_once(mesh):
    v, f = mesh.vertices, mesh.faces
    nv = len(v)
    edges = mesh.edges
    inv = mesh._edge_index[1]
    nf = len(f)
    # _directed_edges stacks (0,1), (1,2), (2,0) edges face-block by face-block
    m01 = nv + inv[:nf]
    m12 = nv + inv[nf:2 * nf]
    m20 = nv + inv[2 * nf:]
    a, b, c = f[:, 0], f[:, 1], f[:, 2]
    faces = np.concatenate([
        np.stack([a, m01, m20], 1),
        np.stack([m01, b, m12], 1),
        np.stack([m20, m12, c], 1),
        np.stack([m01, m12, m20], 1),
    ])
    mids = 0.5 * (v[edges[:, 0]] + v[edges[:, 1]])
    tags = np.concatenate([mesh.tags, mesh.tags.max() + 1 + np.arange(len(edges))])
    return TriangleMesh(np.concatenate([v, mids]), faces, tags, validate=False)


def sample_surface_uniform(mesh, n_points, seed=None):
    """Draw points uniformly with respect to surface area.

    Uses ``numpy.random.Generator(PCG64(seed))`` with a fixed stream order:
    ``n_points`` uniforms select faces by inverting the cumulative area, then
    ``n_points`` pairs of uniforms place each point inside its face with the
    square-root barycentric map. Each point carries its face normal.
    """
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    if mesh.n_faces == 0:
        raise EmptyMesh("cannot sample a mesh without faces")
    rng = np.random.Generator(np.random.PCG64(seed))
    areas = mesh.face_areas
    cdf = np.cumsum(areas)
    cdf /= cdf[-1]
    u = rng.random(n_points)
    fid = np.minimum(np.searchsorted(cdf, u, side="right"), mesh.n_faces - 1)
    r = rng.random((n_points, 2))
    s = np.sqrt(r[:, :1])
    w1 = s * (1.0 - r[:, 1:])
    w2 = s * r[:, 1:]
    tri = mesh.vertices[mesh.faces[fid]]
    pts = (1.0 - s) * tri[:, 0] + w1 * tri[:, 1] + w2 * tri[:, 2]
    return SurfaceSamples(pts, mesh.face_normals[fid], fid, seed)


def dihedral_deviation(mesh):
    """Per interior edge, the angle between the normals of its two faces.

    Zero on a flat patch; equals pi minus the interior dihedral angle.
    """
    ef = mesh.edge_faces
    ok = ef[:, 1] >= 0
    n = mesh.face_normals
    d = np.einsum("ij,ij->i", n[ef[ok, 0]], n[ef[ok, 1]])
    return np.arccos(np.clip(d, -1.0, 1.0))


def max_dihedral_deviation(mesh):
    dev = dihedral_deviation(mesh)
    return float(dev.max()) if len(dev) else 0.0
