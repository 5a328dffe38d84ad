import logging
from functools import cached_property

import numpy as np
from scipy import sparse

from ..errors import (
    DegenerateFace,
    EmptyMesh,
    IndexOutOfRange,
    NonManifoldEdge,
    NonManifoldOrientation,
    NotClosed,
)

logger = logging.getLogger(__name__)

# relative to the squared bounding-box diagonal
_AREA_EPS = 1e-15


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class TriangleMesh:
    """Indexed triangle surface with cached connectivity.

    Instances are immutable: the vertex, face and tag arrays are read-only and
    every operation that changes geometry or connectivity returns a new mesh.
    Faces are counter-clockwise when seen from outside, so face normals
    computed as ``(b - a) x (c - a)`` point outward.

    Parameters
    ----------
    vertices : (V, 3) array_like
        Vertex positions in millimetres.
    faces : (F, 3) array_like of int
        Vertex indices of each triangle.
    tags : (V,) array_like of int, optional
        Per-vertex provenance tags. Defaults to ``arange(V)``.
    validate : bool
        Run the connectivity and degeneracy checks. Internal callers that only
        move vertices of an already-validated mesh skip them.
    """

    def __init__(self, vertices, faces, tags=None, *, validate=True):
        v = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
        if tags is None:
            t = np.arange(len(v), dtype=np.int64)
        else:
            t = np.asarray(tags, dtype=np.int64).reshape(-1)
            if len(t) != len(v):
                raise ValueError(f"expected {len(v)} tags, got {len(t)}")
        self.vertices = _frozen(v)
        self.faces = _frozen(f)
        self.tags = _frozen(t)
        if validate:
            self._validate()

    def __repr__(self):
        return (f"TriangleMesh(V={self.n_vertices}, F={self.n_faces}, "
                f"closed={self.is_closed})")

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    @property
    def n_edges(self):
        return len(self.edges)

    def _validate(self):
        v, f = self.vertices, self.faces
        if not np.all(np.isfinite(v)):
            raise ValueError("vertex coordinates must be finite")
        if f.size == 0:
            return
        if f.min() < 0 or f.max() >= len(v):
            bad = int(np.flatnonzero((f < 0).any(1) | (f >= len(v)).any(1))[0])
            raise IndexOutOfRange(f"face {bad} references a vertex outside [0, {len(v)})")
        same = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 2] == f[:, 0])
        if same.any():
            raise DegenerateFace(f"face {int(np.flatnonzero(same)[0])} repeats a vertex index")
        diag2 = float(np.sum((v.max(0) - v.min(0)) ** 2))
        area2 = np.sum(self._face_cross ** 2, axis=1)
        thin = area2 <= (_AREA_EPS * diag2) ** 2
        if thin.any():
            raise DegenerateFace(f"face {int(np.flatnonzero(thin)[0])} has zero area")
        counts = self._edge_face_count
        if counts.max() > 2:
            e = self.edges[int(np.argmax(counts))]
            raise NonManifoldEdge(f"edge {tuple(int(i) for i in e)} has {int(counts.max())} incident faces")
        d = self._directed_edges
        key = d[:, 0] * len(v) + d[:, 1]
        uniq, cnt = np.unique(key, return_counts=True)
        if cnt.max() > 1:
            k = int(uniq[np.argmax(cnt)])
            raise NonManifoldOrientation(
                f"directed edge ({k // len(v)}, {k % len(v)}) is used twice; "
                "neighbouring faces have inconsistent winding")

    # connectivity -----------------------------------------------------------

    @cached_property
    def _directed_edges(self):
        f = self.faces
        return np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])

    @cached_property
    def _edge_index(self):
        d = np.sort(self._directed_edges, axis=1)
        edges, inverse = np.unique(d, axis=0, return_inverse=True)
        return _frozen(edges.reshape(-1, 2)), inverse.reshape(-1)

    @property
    def edges(self):
        """Unique undirected edges as sorted ``(i, j)`` pairs, lexicographic order."""
        return self._edge_index[0]

    @cached_property
    def _edge_face_count(self):
        return np.bincount(self._edge_index[1], minlength=len(self.edges))

    @cached_property
    def edge_faces(self):
        """(E, 2) incident face ids per edge; ``-1`` marks a missing second face."""
        inv = self._edge_index[1]
        fid = np.tile(np.arange(self.n_faces), 3)
        order = np.argsort(inv, kind="stable")
        out = np.full((len(self.edges), 2), -1, dtype=np.int64)
        inv_s, fid_s = inv[order], fid[order]
        first = np.ones(len(inv_s), dtype=bool)
        first[1:] = inv_s[1:] != inv_s[:-1]
        out[inv_s[first], 0] = fid_s[first]
        out[inv_s[~first], 1] = fid_s[~first]
        return _frozen(out)

    @cached_property
    def is_closed(self):
        return self.n_faces > 0 and bool(np.all(self._edge_face_count == 2))

    @cached_property
    def adjacency(self):
        """Symmetric vertex adjacency as a CSR matrix of ones."""
        e = self.edges
        n = self.n_vertices
        data = np.ones(2 * len(e))
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        return sparse.csr_matrix((data, (rows, cols)), shape=(n, n))

    @cached_property
    def valence(self):
        return np.asarray(self.adjacency.sum(axis=1)).ravel().astype(np.int64)

    def neighbors(self, i):
        a = self.adjacency
        return a.indices[a.indptr[i]:a.indptr[i + 1]].copy()

    # geometry ---------------------------------------------------------------

    @cached_property
    def _face_cross(self):
        v, f = self.vertices, self.faces
        return np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])

    @property
    def face_areas(self):
        return 0.5 * np.linalg.norm(self._face_cross, axis=1)

    @property
    def face_normals(self):
        c = self._face_cross
        n = np.linalg.norm(c, axis=1, keepdims=True)
        return c / np.where(n > 0, n, 1.0)

    @property
    def vertex_normals(self):
        """Area-weighted vertex normals."""
        acc = np.zeros_like(self.vertices)
        c = self._face_cross
        for k in range(3):
            np.add.at(acc, self.faces[:, k], c)
        n = np.linalg.norm(acc, axis=1, keepdims=True)
        return acc / np.where(n > 0, n, 1.0)

    @property
    def area(self):
        return float(self.face_areas.sum())

    @property
    def volume(self):
        """Signed enclosed volume; positive for outward-oriented closed meshes."""
        v, f = self.vertices, self.faces
        return float(np.einsum("ij,ij->i", v[f[:, 0]], self._face_cross).sum() / 6.0)

    @property
    def bounds(self):
        return np.stack([self.vertices.min(0), self.vertices.max(0)])

    @property
    def diameter(self):
        """Bounding-box diagonal length."""
        lo, hi = self.bounds
        return float(np.linalg.norm(hi - lo))

    def edge_lengths(self):
        e = self.edges
        return np.linalg.norm(self.vertices[e[:, 1]] - self.vertices[e[:, 0]], axis=1)

    def euler_characteristic(self):
        if not self.is_closed:
            raise NotClosed("Euler characteristic requires a closed manifold mesh")
        return self.n_vertices - self.n_edges + self.n_faces

    # derived meshes ----------------------------------------------------------

    def with_vertices(self, vertices):
        """Same connectivity and tags, new positions."""
        v = np.asarray(vertices, dtype=np.float64)
        if v.shape != self.vertices.shape:
            raise ValueError(f"expected vertex array of shape {self.vertices.shape}, got {v.shape}")
        out = TriangleMesh(v, self.faces, self.tags, validate=False)
        # connectivity caches do not depend on positions
        for name in ("_directed_edges", "_edge_index", "_edge_face_count",
                     "edge_faces", "is_closed", "adjacency", "valence"):
            if name in self.__dict__:
                out.__dict__[name] = self.__dict__[name]
        return out

    def connected_components(self):
        """Component label per vertex, labels ordered by lowest vertex index."""
        from scipy.sparse.csgraph import connected_components

        _, labels = connected_components(self.adjacency, directed=False)
        return labels

    def submesh(self, face_mask):
        """Mesh made of the selected faces with unused vertices dropped."""
        faces = self.faces[np.asarray(face_mask)]
        used = np.unique(faces)
        remap = np.full(self.n_vertices, -1, dtype=np.int64)
        remap[used] = np.arange(len(used))
        return TriangleMesh(self.vertices[used], remap[faces], self.tags[used])

    def largest_component(self):
        if self.n_faces == 0:
            raise EmptyMesh("mesh has no faces")
        labels = self.connected_components()
        face_lab = labels[self.faces[:, 0]]
        counts = np.bincount(face_lab)
        keep = int(np.argmax(counts))
        if len(counts) > 1:
            logger.debug("keeping component %d of %d (%d faces)", keep, len(counts), counts[keep])
        return self.submesh(face_lab == keep)


def build_mesh(vertices, faces, tags=None):
    """Validate and wrap vertex/face arrays as a :class:`TriangleMesh`.

    Raises
    ------
    IndexOutOfRange, DegenerateFace, NonManifoldEdge, NonManifoldOrientation
    """
    return TriangleMesh(vertices, faces, tags)


def concatenate(meshes):
    """Disjoint union of several meshes; tags are kept as given."""
    vs, fs, ts = [], [], []
    off = 0
    for m in meshes:
        vs.append(m.vertices)
        fs.append(m.faces + off)
        ts.append(m.tags)
        off += m.n_vertices
    return TriangleMesh(np.concatenate(vs), np.concatenate(fs), np.concatenate(ts))
