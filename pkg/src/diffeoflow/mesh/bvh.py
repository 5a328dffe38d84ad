"""Triangle bounding volume hierarchy with compiled query kernels."""

import numba
import numpy as np

# the bundled TBB is too old for numba; prefer OpenMP
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

_LEAF = 8


class TriangleBVH:
    """Median-split AABB tree over the triangles ``tri`` ``(F, 3, 3)``.

    Nodes live in flat arrays; leaves own the contiguous run
    ``order[start:stop]``. Inner nodes split at the median centroid along the
    longest centroid extent.
    """

    def __init__(self, tri, leaf_size=_LEAF):
        self.tri = np.ascontiguousarray(tri, dtype=np.float64)
        self.lo_f = self.tri.min(axis=1)
        self.hi_f = self.tri.max(axis=1)
        cent = self.tri.mean(axis=1)
        n = len(self.tri)
        self.order = np.arange(n, dtype=np.int64)
        lo, hi, start, stop, left, right = [], [], [], [], [], []
        todo = [(0, n, -1, 0)] if n else []
        while todo:
            s, e, parent, side = todo.pop()
            node = len(lo)
            if parent >= 0:
                (left if side == 0 else right)[parent] = node
            idx = self.order[s:e]
            lo.append(self.lo_f[idx].min(0))
            hi.append(self.hi_f[idx].max(0))
            start.append(s)
            stop.append(e)
            left.append(-1)
            right.append(-1)
            if e - s > leaf_size:
                c = cent[idx]
                axis = int(np.argmax(c.max(0) - c.min(0)))
                self.order[s:e] = idx[np.argsort(c[:, axis], kind="stable")]
                mid = (s + e) // 2
                todo.append((mid, e, node, 1))
                todo.append((s, mid, node, 0))
        self.lo = np.array(lo, dtype=np.float64).reshape(-1, 3)
        self.hi = np.array(hi, dtype=np.float64).reshape(-1, 3)
        self.start = np.array(start, dtype=np.int64)
        self.stop = np.array(stop, dtype=np.int64)
        self.left = np.array(left, dtype=np.int64)
        self.right = np.array(right, dtype=np.int64)

    def nearest(self, points):
        """Exact closest point on the triangle set for every query.

        Returns ``(distance, closest_point, triangle_id)``.
        """
        p = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
        d2 = np.empty(len(p))
        q = np.empty((len(p), 3))
        fid = np.empty(len(p), dtype=np.int64)
        if len(self.lo):
            _nearest_kernel(p, self.tri, self.order, self.lo, self.hi, self.left,
                            self.right, self.start, self.stop, d2, q, fid)
        return np.sqrt(d2), q, fid

    def self_pairs(self):
        """Triangle pairs ``(f, g)``, ``f < g``, whose AABBs overlap."""
        if len(self.lo) == 0:
            return np.zeros((0, 2), dtype=np.int64)
        leaf_pairs = []
        stack = [(0, 0)]
        lo, hi, left = self.lo, self.hi, self.left
        while stack:
            i, j = stack.pop()
            if i != j and not (np.all(lo[i] <= hi[j]) and np.all(lo[j] <= hi[i])):
                continue
            li, lj = left[i] < 0, left[j] < 0
            if li and lj:
                leaf_pairs.append((i, j))
            elif i == j:
                a, b = left[i], self.right[i]
                stack += [(a, a), (b, b), (a, b)]
            elif li or (not lj and self.stop[j] - self.start[j] > self.stop[i] - self.start[i]):
                stack += [(i, left[j]), (i, self.right[j])]
            else:
                stack += [(left[i], j), (self.right[i], j)]
        out = []
        for i, j in leaf_pairs:
            fa = self.order[self.start[i]:self.stop[i]]
            fb = self.order[self.start[j]:self.stop[j]]
            pa, pb = np.meshgrid(fa, fb, indexing="ij")
            out.append(np.stack([pa.ravel(), pb.ravel()], 1))
        pairs = np.sort(np.concatenate(out), axis=1)
        pairs = pairs[pairs[:, 0] < pairs[:, 1]]
        a, b = pairs[:, 0], pairs[:, 1]
        ok = np.all(self.lo_f[a] <= self.hi_f[b], axis=1) & np.all(self.lo_f[b] <= self.hi_f[a], axis=1)
        return np.unique(pairs[ok], axis=0)


@numba.njit(cache=True)
def _closest_on_triangle(px, py, pz, t):
    ax, ay, az = t[0, 0], t[0, 1], t[0, 2]
    abx, aby, abz = t[1, 0] - ax, t[1, 1] - ay, t[1, 2] - az
    acx, acy, acz = t[2, 0] - ax, t[2, 1] - ay, t[2, 2] - az
    apx, apy, apz = px - ax, py - ay, pz - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        return ax, ay, az
    bpx, bpy, bpz = px - t[1, 0], py - t[1, 1], pz - t[1, 2]
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return t[1, 0], t[1, 1], t[1, 2]
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        return ax + v * abx, ay + v * aby, az + v * abz
    cpx, cpy, cpz = px - t[2, 0], py - t[2, 1], pz - t[2, 2]
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return t[2, 0], t[2, 1], t[2, 2]
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return ax + w * acx, ay + w * acy, az + w * acz
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return (t[1, 0] + w * (t[2, 0] - t[1, 0]), t[1, 1] + w * (t[2, 1] - t[1, 1]),
                t[1, 2] + w * (t[2, 2] - t[1, 2]))
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return ax + abx * v + acx * w, ay + aby * v + acy * w, az + abz * v + acz * w


@numba.njit(cache=True)
def _box_dist2(px, py, pz, lo, hi):
    d = 0.0
    for k, c in enumerate((px, py, pz)):
        if c < lo[k]:
            d += (lo[k] - c) ** 2
        elif c > hi[k]:
            d += (c - hi[k]) ** 2
    return d


_BLOCK = 256


@numba.njit(cache=True, parallel=True)
def _nearest_kernel(pts, tri, order, lo, hi, left, right, start, stop, out_d2, out_q, out_f):
    n_pts = pts.shape[0]
    n_blocks = (n_pts + _BLOCK - 1) // _BLOCK
    for blk in numba.prange(n_blocks):
        stack = np.empty(128, dtype=np.int64)
        hx, hy, hz = 0.0, 0.0, 0.0
        have_hint = False
        for n in range(blk * _BLOCK, min(n_pts, (blk + 1) * _BLOCK)):
            px, py, pz = pts[n, 0], pts[n, 1], pts[n, 2]
            best = np.inf
            if have_hint:
                # the previous query's closest point is on the surface, so its
                # distance bounds this one; loosened so its triangle is revisited
                best = ((px - hx) ** 2 + (py - hy) ** 2 + (pz - hz) ** 2) * (1.0 + 1e-9) + 1e-300
            bq = (0.0, 0.0, 0.0)
            bf = -1
            sp = 0
            stack[sp] = 0
            sp += 1
            while sp > 0:
                sp -= 1
                node = stack[sp]
                if _box_dist2(px, py, pz, lo[node], hi[node]) >= best:
                    continue
                if left[node] < 0:
                    for s in range(start[node], stop[node]):
                        f = order[s]
                        qx, qy, qz = _closest_on_triangle(px, py, pz, tri[f])
                        d2 = (px - qx) ** 2 + (py - qy) ** 2 + (pz - qz) ** 2
                        if d2 < best or (d2 == best and f < bf):
                            best = d2
                            bq = (qx, qy, qz)
                            bf = f
                else:
                    a, b = left[node], right[node]
                    da = _box_dist2(px, py, pz, lo[a], hi[a])
                    db = _box_dist2(px, py, pz, lo[b], hi[b])
                    # nearer child on top of the stack
                    if da <= db:
                        stack[sp] = b
                        stack[sp + 1] = a
                    else:
                        stack[sp] = a
                        stack[sp + 1] = b
                    sp += 2
            out_d2[n] = best
            out_q[n, 0], out_q[n, 1], out_q[n, 2] = bq
            out_f[n] = bf
            hx, hy, hz = bq
            have_hint = True


@numba.njit(cache=True, parallel=True)
def winding_kernel(pts, tri, out):
    """Generalized winding number: summed signed solid angles over ``4 pi``."""
    for n in numba.prange(pts.shape[0]):
        px, py, pz = pts[n, 0], pts[n, 1], pts[n, 2]
        acc = 0.0
        for f in range(tri.shape[0]):
            ax, ay, az = tri[f, 0, 0] - px, tri[f, 0, 1] - py, tri[f, 0, 2] - pz
            bx, by, bz = tri[f, 1, 0] - px, tri[f, 1, 1] - py, tri[f, 1, 2] - pz
            cx, cy, cz = tri[f, 2, 0] - px, tri[f, 2, 1] - py, tri[f, 2, 2] - pz
            la = np.sqrt(ax * ax + ay * ay + az * az)
            lb = np.sqrt(bx * bx + by * by + bz * bz)
            lc = np.sqrt(cx * cx + cy * cy + cz * cz)
            det = ax * (by * cz - bz * cy) - ay * (bx * cz - bz * cx) + az * (bx * cy - by * cx)
            den = (la * lb * lc + (ax * bx + ay * by + az * bz) * lc
                   + (bx * cx + by * cy + bz * cz) * la + (cx * ax + cy * ay + cz * az) * lb)
            acc += np.arctan2(det, den)
        out[n] = acc / (2.0 * np.pi)
