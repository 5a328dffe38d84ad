"""Surface comparison metrics on sampled point clouds and mesh regularity.

Chamfer (CH) and Hausdorff (HD) distances and Chamfer normals (CHN) are
computed between uniform surface samples; %SIF counts faces that properly
intersect a non-adjacent face of the same mesh.
"""

import csv
import io
import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyCloud, NonUnitNormal
from .mesh import TriangleBVH, sample_surface_uniform

REPORT_SCHEMA = "diffeoflow.metrics/1"
DEFAULT_SAMPLES = 200_000


def _cloud(points, name):
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(p) == 0:
        raise EmptyCloud(f"{name} is empty")
    return p


def nearest(points_from, points_to):
    """Distance and index of the nearest neighbour in ``points_to`` for each query."""
    d, i = cKDTree(points_to).query(points_from, k=1)
    return d, i


def one_sided_distances(points_a, points_b):
    """Nearest-neighbour distances from every ``a`` to ``b`` and from every ``b`` to ``a``."""
    a = _cloud(points_a, "points_a")
    b = _cloud(points_b, "points_b")
    return nearest(a, b)[0], nearest(b, a)[0]


def chamfer_distance(points_a, points_b):
    """``0.5 * mean_a min_b |a - b| + 0.5 * mean_b min_a |a - b|``."""
    dab, dba = one_sided_distances(points_a, points_b)
    return 0.5 * float(dab.mean()) + 0.5 * float(dba.mean())


def hausdorff_distance(points_a, points_b):
    dab, dba = one_sided_distances(points_a, points_b)
    return max(float(dab.max()), float(dba.max()))


def chamfer_normals(points_a, normals_a, points_b, normals_b, absolute=True, atol=1e-6):
    """Symmetric mean cosine between each normal and its nearest neighbour's normal.

    With ``absolute`` the cosine magnitude is used, so flipped orientations
    score the same as consistent ones.
    """
    a = _cloud(points_a, "points_a")
    b = _cloud(points_b, "points_b")
    na = np.asarray(normals_a, float).reshape(-1, 3)
    nb = np.asarray(normals_b, float).reshape(-1, 3)
    for n, name in ((na, "normals_a"), (nb, "normals_b")):
        if np.any(np.abs(np.linalg.norm(n, axis=1) - 1.0) > atol):
            raise NonUnitNormal(f"{name} must be unit vectors")
    _, iab = nearest(a, b)
    _, iba = nearest(b, a)
    cab = np.einsum("ij,ij->i", na, nb[iab])
    cba = np.einsum("ij,ij->i", nb, na[iba])
    if absolute:
        cab, cba = np.abs(cab), np.abs(cba)
    return 0.5 * float(cab.mean()) + 0.5 * float(cba.mean())


# --- self intersections ------------------------------------------------------

_EPS = 1e-12


def _orient(a, b, c, d):
    """Signed volume ``det[b - a, c - a, d - a]`` row by row."""
    return np.einsum("ij,ij->i", np.cross(b - a, c - a), d - a)


def _segments_cross_triangles(p, q, a, b, c, tol):
    """Segment ``pq`` passes through the interior of triangle ``abc`` (strict)."""
    sp = _orient(a, b, c, p)
    sq = _orient(a, b, c, q)
    straddle = ((sp > tol) & (sq < -tol)) | ((sp < -tol) & (sq > tol))
    e1 = _orient(p, q, a, b)
    e2 = _orient(p, q, b, c)
    e3 = _orient(p, q, c, a)
    same = ((e1 > tol) & (e2 > tol) & (e3 > tol)) | ((e1 < -tol) & (e2 < -tol) & (e3 < -tol))
    return straddle & same


def _coplanar_overlap(t1, t2, normal, tol):
    """Interiors of two coplanar triangles overlap (2D test in the dominant plane)."""
    drop = int(np.argmax(np.abs(normal)))
    keep = [k for k in range(3) if k != drop]
    A = t1[:, keep]
    B = t2[:, keep]

    def cross2(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    def strictly_inside(p, T):
        s = [cross2(T[i], T[(i + 1) % 3], p) for i in range(3)]
        return all(x > tol for x in s) or all(x < -tol for x in s)

    for i in range(3):
        for j in range(3):
            p1, p2 = A[i], A[(i + 1) % 3]
            q1, q2 = B[j], B[(j + 1) % 3]
            d1, d2 = cross2(q1, q2, p1), cross2(q1, q2, p2)
            d3, d4 = cross2(p1, p2, q1), cross2(p1, p2, q2)
            if d1 * d2 < -tol * tol and d3 * d4 < -tol * tol:
                return True
    if any(strictly_inside(p, B) for p in A) or any(strictly_inside(p, A) for p in B):
        return True
    # identical triangles on distinct vertices
    return bool(strictly_inside(A.mean(0), B) and strictly_inside(B.mean(0), A))


def triangles_intersect(tri, pairs, tol=None):
    """Exact-predicate proper intersection test for face pairs.

    ``tri`` is ``(F, 3, 3)``; ``pairs`` is ``(P, 2)``. Touching contact and
    coplanar contact within the predicate tolerance are not intersections.
    The tolerance defaults to ``1e-12`` scaled by the cube of the bounding
    box size, since the predicates are signed volumes.
    """
    if len(pairs) == 0:
        return np.zeros(0, dtype=bool)
    if tol is None:
        ext = float(np.max(tri.reshape(-1, 3).max(0) - tri.reshape(-1, 3).min(0)))
        tol = _EPS * max(ext, 1e-300) ** 3
    A = tri[pairs[:, 0]]
    B = tri[pairs[:, 1]]
    hit = np.zeros(len(pairs), dtype=bool)
    for k in range(3):
        p, q = A[:, k], A[:, (k + 1) % 3]
        hit |= _segments_cross_triangles(p, q, B[:, 0], B[:, 1], B[:, 2], tol)
        p, q = B[:, k], B[:, (k + 1) % 3]
        hit |= _segments_cross_triangles(p, q, A[:, 0], A[:, 1], A[:, 2], tol)
    # coplanar pairs: all of B within tolerance of A's plane
    sa = np.stack([_orient(A[:, 0], A[:, 1], A[:, 2], B[:, k]) for k in range(3)], 1)
    flat = np.all(np.abs(sa) <= tol, axis=1) & ~hit
    for i in np.flatnonzero(flat):
        n = np.cross(A[i, 1] - A[i, 0], A[i, 2] - A[i, 0])
        ext2 = float(np.max(np.abs(n))) ** 0.5
        hit[i] = _coplanar_overlap(A[i], B[i], n, _EPS * ext2 ** 2)
    return hit


def _non_adjacent(faces, pairs):
    fa = faces[pairs[:, 0]]
    fb = faces[pairs[:, 1]]
    share = np.zeros(len(pairs), dtype=bool)
    for i in range(3):
        for j in range(3):
            share |= fa[:, i] == fb[:, j]
    return ~share


def intersecting_pairs(mesh, candidates=None):
    """Pairs of non-adjacent faces that properly intersect.

    Faces sharing a vertex or an edge are never tested. ``candidates``
    overrides the BVH broad phase (used by brute-force checks).
    """
    tri = mesh.vertices[mesh.faces]
    pairs = TriangleBVH(tri).self_pairs() if candidates is None else np.asarray(candidates)
    pairs = pairs.reshape(-1, 2)
    pairs = pairs[_non_adjacent(mesh.faces, pairs)]
    return pairs[triangles_intersect(tri, pairs)]


def self_intersecting_faces(mesh):
    """Number and percentage of faces that intersect at least one other face.

    Both faces of an intersecting pair are counted.
    """
    if mesh.n_faces == 0:
        return 0, 0.0
    pairs = intersecting_pairs(mesh)
    count = int(len(np.unique(pairs))) if len(pairs) else 0
    return count, 100.0 * count / mesh.n_faces


@dataclass(frozen=True)
class MetricsReport:
    chamfer_mm: float
    hausdorff_mm: float
    chamfer_normals: float
    sif_percent: float
    sif_count: int
    n_faces: int
    chamfer_pred_to_gt_mm: float
    chamfer_gt_to_pred_mm: float
    hausdorff_pred_to_gt_mm: float
    hausdorff_gt_to_pred_mm: float
    n_samples: int
    seed: int | None
    signed_normals: bool = False
    schema: str = REPORT_SCHEMA

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def csv_header(cls):
        return list(cls.__dataclass_fields__)

    def to_csv_row(self, header=True):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(self.csv_header())
        d = self.to_dict()
        w.writerow([repr(d[k]) if isinstance(d[k], float) else d[k] for k in self.csv_header()])
        return buf.getvalue()


def evaluate_surfaces(pred_mesh, gt_mesh, n_samples=DEFAULT_SAMPLES, seed=0, signed_normals=False):
    """Sample both surfaces and compute CH, HD, CHN and the %SIF of ``pred_mesh``.

    Both meshes are sampled with the same ``seed``; the streams are
    independent because each call builds its own generator.
    """
    sp = sample_surface_uniform(pred_mesh, n_samples, seed)
    sg = sample_surface_uniform(gt_mesh, n_samples, seed)
    dpg, ipg = nearest(sp.points, sg.points)
    dgp, igp = nearest(sg.points, sp.points)
    cab = np.einsum("ij,ij->i", sp.normals, sg.normals[ipg])
    cba = np.einsum("ij,ij->i", sg.normals, sp.normals[igp])
    if not signed_normals:
        cab, cba = np.abs(cab), np.abs(cba)
    count, pct = self_intersecting_faces(pred_mesh)
    return MetricsReport(
        chamfer_mm=0.5 * float(dpg.mean()) + 0.5 * float(dgp.mean()),
        hausdorff_mm=max(float(dpg.max()), float(dgp.max())),
        chamfer_normals=0.5 * float(cab.mean()) + 0.5 * float(cba.mean()),
        sif_percent=pct,
        sif_count=count,
        n_faces=pred_mesh.n_faces,
        chamfer_pred_to_gt_mm=float(dpg.mean()),
        chamfer_gt_to_pred_mm=float(dgp.mean()),
        hausdorff_pred_to_gt_mm=float(dpg.max()),
        hausdorff_gt_to_pred_mm=float(dgp.max()),
        n_samples=int(n_samples),
        seed=seed,
        signed_normals=signed_normals,
    )
