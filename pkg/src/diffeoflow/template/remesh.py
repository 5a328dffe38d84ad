"""Isotropic explicit remeshing towards a target edge length.

One iteration, after Botsch and Kobbelt (2004):

1. split edges longer than 4/3 L at their midpoint;
2. collapse edges shorter than 4/5 L into their midpoint, unless that would
   create an edge longer than 4/3 L, break the link condition, or flip a face;
3. flip edges when that moves the four affected valences towards 6;
4. tangential relaxation towards the one-ring centroid, then projection back
   onto the input surface.

Every local operation keeps the surface a closed, consistently oriented
manifold of the same genus.
"""

import logging

import numpy as np
from scipy import sparse

from ..mesh import SurfaceLocator, TriangleMesh

logger = logging.getLogger(__name__)

# minimum cosine between a face normal before and after a collapse or flip
_MIN_COS = 0.2


def _unit_normals(a, b, c):
    u, v = b - a, c - a
    n = np.stack([u[:, 1] * v[:, 2] - u[:, 2] * v[:, 1],
                  u[:, 2] * v[:, 0] - u[:, 0] * v[:, 2],
                  u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]], axis=1)
    ln = np.sqrt(np.einsum("ij,ij->i", n, n))
    return n / np.where(ln > 0, ln, 1.0)[:, None]


def _rot(face, v):
    a, b, c = face
    if a == v:
        return a, b, c
    if b == v:
        return b, c, a
    return c, a, b


class _Remesher:
    def __init__(self, vertices, faces):
        self.P = np.array(vertices, dtype=np.float64)
        self.F = [list(f) for f in np.asarray(faces).tolist()]
        self.f_alive = [True] * len(self.F)
        self.v_alive = [True] * len(self.P)
        self.vf = [set() for _ in range(len(self.P))]
        for i, f in enumerate(self.F):
            for v in f:
                self.vf[v].add(i)
        self.val = [0] * len(self.P)
        for v in range(len(self.P)):
            self.val[v] = len(self._nbrs(v))

    # queries ------------------------------------------------------------------

    def _nbrs(self, v):
        out = set()
        for f in self.vf[v]:
            out.update(self.F[f])
        out.discard(v)
        return out

    def _edge_faces(self, a, b):
        """``(f_ab, f_ba)``: the faces holding directed edges a->b and b->a."""
        common = self.vf[a] & self.vf[b]
        if len(common) != 2:
            return None
        f1, f2 = common
        x = _rot(self.F[f1], a)
        if x[1] == b:
            return f1, f2
        return f2, f1

    def _edges(self):
        faces = np.array([f for f, ok in zip(self.F, self.f_alive) if ok], dtype=np.int64)
        e = np.sort(np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]]), axis=1)
        e = np.unique(e, axis=0)
        length = np.linalg.norm(self.P[e[:, 1]] - self.P[e[:, 0]], axis=1)
        return e, length

    @staticmethod
    def _normal(a, b, c):
        return _unit_normals(a[None], b[None], c[None])[0]

    # operations --------------------------------------------------------------

    def _new_vertex(self, p):
        idx = len(self.v_alive)
        if idx >= len(self.P):
            self.P = np.vstack([self.P, np.empty((max(16, len(self.P)), 3))])
        self.P[idx] = p
        self.v_alive.append(True)
        self.vf.append(set())
        self.val.append(0)
        return idx

    def _new_face(self, f):
        self.F.append(list(f))
        self.f_alive.append(True)
        i = len(self.F) - 1
        for v in f:
            self.vf[v].add(i)
        return i

    def split(self, a, b):
        ef = self._edge_faces(a, b)
        if ef is None:
            return False
        f1, f2 = ef
        _, _, c = _rot(self.F[f1], a)
        _, _, d = _rot(self.F[f2], b)
        m = self._new_vertex(0.5 * (self.P[a] + self.P[b]))
        self.F[f1] = [a, m, c]
        self.F[f2] = [b, m, d]
        self.vf[b].discard(f1)
        self.vf[a].discard(f2)
        self.vf[m].update((f1, f2))
        self._new_face((m, b, c))
        self._new_face((m, a, d))
        self.val[m] = 4
        self.val[c] += 1
        self.val[d] += 1
        return True

    def collapse(self, a, b, hi):
        if not (self.v_alive[a] and self.v_alive[b]):
            return False
        ef = self._edge_faces(a, b)
        if ef is None:
            return False
        f1, f2 = ef
        c = _rot(self.F[f1], a)[2]
        d = _rot(self.F[f2], b)[2]
        na, nb = self._nbrs(a), self._nbrs(b)
        if na & nb != {c, d}:
            return False
        if self.val[c] <= 3 or self.val[d] <= 3 or self.val[a] + self.val[b] - 4 < 3:
            return False
        p = 0.5 * (self.P[a] + self.P[b])
        ring = np.array(sorted((na | nb) - {a, b}))
        if np.any(np.linalg.norm(self.P[ring] - p, axis=1) > hi):
            return False
        fs = np.array([self.F[f] for f in (self.vf[a] | self.vf[b]) - {f1, f2}])
        old = self.P[fs]
        new = np.where(((fs == a) | (fs == b))[..., None], p, old)
        n0 = _unit_normals(old[:, 0], old[:, 1], old[:, 2])
        n1 = _unit_normals(new[:, 0], new[:, 1], new[:, 2])
        if np.any(np.einsum("ij,ij->i", n0, n1) < _MIN_COS):
            return False
        for f in (f1, f2):
            self.f_alive[f] = False
            for v in self.F[f]:
                self.vf[v].discard(f)
        for f in self.vf[b]:
            self.F[f] = [a if v == b else v for v in self.F[f]]
        self.vf[a] |= self.vf[b]
        self.vf[b] = set()
        self.v_alive[b] = False
        self.P[a] = p
        self.val[a] = self.val[a] + self.val[b] - 4
        self.val[c] -= 1
        self.val[d] -= 1
        return True

    def flip(self, a, b):
        ef = self._edge_faces(a, b)
        if ef is None:
            return False
        f1, f2 = ef
        c = _rot(self.F[f1], a)[2]
        d = _rot(self.F[f2], b)[2]
        if c == d or d in self._nbrs(c):
            return False
        val = self.val
        if val[a] <= 3 or val[b] <= 3:
            return False
        before = abs(val[a] - 6) + abs(val[b] - 6) + abs(val[c] - 6) + abs(val[d] - 6)
        after = abs(val[a] - 7) + abs(val[b] - 7) + abs(val[c] - 5) + abs(val[d] - 5)
        if after >= before:
            return False
        P = self.P
        n_old = self._normal(P[a], P[b], P[c]) + self._normal(P[b], P[a], P[d])
        n_a = self._normal(P[a], P[d], P[c])
        n_b = self._normal(P[b], P[c], P[d])
        if np.dot(n_a, n_b) < _MIN_COS or np.dot(n_a, n_old) <= 0 or np.dot(n_b, n_old) <= 0:
            return False
        self.F[f1] = [a, d, c]
        self.F[f2] = [b, c, d]
        self.vf[a].discard(f2)
        self.vf[b].discard(f1)
        self.vf[c].add(f2)
        self.vf[d].add(f1)
        val[a] -= 1
        val[b] -= 1
        val[c] += 1
        val[d] += 1
        return True

    # passes --------------------------------------------------------------------

    def split_long(self, hi):
        e, length = self._edges()
        n = 0
        for k in np.argsort(-length, kind="stable"):
            a, b = int(e[k, 0]), int(e[k, 1])
            if np.linalg.norm(self.P[a] - self.P[b]) > hi and self.split(a, b):
                n += 1
        return n

    def collapse_short(self, lo, hi):
        e, length = self._edges()
        n = 0
        for k in np.argsort(length, kind="stable"):
            if length[k] >= lo:
                break
            a, b = int(e[k, 0]), int(e[k, 1])
            if not (self.v_alive[a] and self.v_alive[b]):
                continue
            if np.linalg.norm(self.P[a] - self.P[b]) < lo and self.collapse(a, b, hi):
                n += 1
        return n

    def equalize_valence(self):
        e, _ = self._edges()
        n = 0
        for a, b in e.tolist():
            if self.flip(a, b):
                n += 1
        return n

    def compact(self):
        keep_v = np.flatnonzero(self.v_alive)
        remap = np.full(len(self.v_alive), -1, dtype=np.int64)
        remap[keep_v] = np.arange(len(keep_v))
        faces = np.array([f for f, ok in zip(self.F, self.f_alive) if ok], dtype=np.int64)
        return self.P[keep_v].copy(), remap[faces]

    def reset(self, vertices, faces):
        self.__init__(vertices, faces)


def _relax(vertices, faces, locator, weight=1.0):
    """Move vertices towards their one-ring centroid within the tangent plane,
    then snap them onto the reference surface."""
    n = len(vertices)
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    adj = sparse.csr_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
    adj = ((adj + adj.T) > 0).astype(np.float64)
    deg = np.asarray(adj.sum(axis=1)).ravel()
    centroid = (adj @ vertices) / deg[:, None]
    cr = np.cross(vertices[faces[:, 1]] - vertices[faces[:, 0]], vertices[faces[:, 2]] - vertices[faces[:, 0]])
    vn = np.zeros_like(vertices)
    for k in range(3):
        np.add.at(vn, faces[:, k], cr)
    vn /= np.maximum(np.linalg.norm(vn, axis=1, keepdims=True), 1e-300)
    delta = centroid - vertices
    delta -= vn * np.einsum("ij,ij->i", delta, vn)[:, None]
    moved = vertices + weight * delta
    return locator.query(moved)[1]


def isotropic_remesh(mesh, target_edge_length, iterations=5, reference=None):
    """Remesh a closed manifold surface to near-uniform edge length.

    Parameters
    ----------
    mesh : TriangleMesh
    target_edge_length : float
        Desired edge length ``L`` in mm.
    iterations : int
    reference : TriangleMesh, optional
        Surface that vertices are projected back onto; defaults to ``mesh``.

    Returns
    -------
    TriangleMesh
        Fresh vertex numbering; tags restart at ``arange(V)``.
    """
    L = float(target_edge_length)
    if L <= 0:
        raise ValueError("target edge length must be positive")
    lo, hi = 0.8 * L, 4.0 / 3.0 * L
    locator = SurfaceLocator(reference if reference is not None else mesh)
    v, f = np.array(mesh.vertices), np.array(mesh.faces)
    r = _Remesher(v, f)
    for it in range(iterations):
        ns = r.split_long(hi)
        nc = r.collapse_short(lo, hi)
        nf = r.equalize_valence()
        v, f = r.compact()
        v = _relax(v, f, locator)
        logger.debug("remesh iteration %d: %d splits, %d collapses, %d flips, %d faces",
                     it, ns, nc, nf, len(f))
        if it + 1 < iterations:
            r.reset(v, f)
    return TriangleMesh(v, f)
