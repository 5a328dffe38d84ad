"""Compiled trilinear interpolation and its reverse-mode counterpart.

Fields are passed flat as ``(H * W * D, 3)`` with node ``(i, j, k)`` at row
``(i * W + j) * D + k``. Points outside the box spanned by the node centres
get zero velocity and zero derivative.
"""

import numba
import numpy as np

numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


@numba.njit(cache=True, inline="always")
def _cell(g, n):
    """Lower cell index and offset of grid coordinate ``g`` on an axis of ``n`` nodes."""
    i = int(np.floor(g))
    if i > n - 2:
        i = n - 2
    return i, g - i


@numba.njit(cache=True, inline="always")
def _stencil(dims, origin, inv, px, py, pz, nid, w, dw):
    """Fill the 8 corner ids, weights and weight gradients; False if outside.

    ``inv`` is the reciprocal grid spacing.
    """
    gx = (px - origin[0]) * inv[0]
    gy = (py - origin[1]) * inv[1]
    gz = (pz - origin[2]) * inv[2]
    if not (gx >= 0.0 and gx <= dims[0] - 1 and gy >= 0.0 and gy <= dims[1] - 1
            and gz >= 0.0 and gz <= dims[2] - 1):
        return False
    i, tx = _cell(gx, dims[0])
    j, ty = _cell(gy, dims[1])
    k, tz = _cell(gz, dims[2])
    c = 0
    for di in range(2):
        fx = tx if di else 1.0 - tx
        dx = inv[0] if di else -inv[0]
        for dj in range(2):
            fy = ty if dj else 1.0 - ty
            dy = inv[1] if dj else -inv[1]
            for dk in range(2):
                fz = tz if dk else 1.0 - tz
                dz = inv[2] if dk else -inv[2]
                nid[c] = ((i + di) * dims[1] + j + dj) * dims[2] + k + dk
                w[c] = fx * fy * fz
                dw[c, 0] = dx * fy * fz
                dw[c, 1] = fx * dy * fz
                dw[c, 2] = fx * fy * dz
                c += 1
    return True


@numba.njit(cache=True, parallel=True)
def sample_kernel(data, dims, origin, spacing, pts, out):
    inv = 1.0 / spacing
    n_pts = pts.shape[0]
    n_chunks = (n_pts + 1023) // 1024
    for ch in numba.prange(n_chunks):
        nid = np.empty(8, dtype=np.int64)
        w = np.empty(8)
        dw = np.empty((8, 3))
        for n in range(ch * 1024, min(n_pts, (ch + 1) * 1024)):
            ux = 0.0
            uy = 0.0
            uz = 0.0
            if _stencil(dims, origin, inv, pts[n, 0], pts[n, 1], pts[n, 2], nid, w, dw):
                for c in range(8):
                    r = nid[c]
                    ux += w[c] * data[r, 0]
                    uy += w[c] * data[r, 1]
                    uz += w[c] * data[r, 2]
            out[n, 0] = ux
            out[n, 1] = uy
            out[n, 2] = uz


@numba.njit(cache=True, inline="always")
def _eval(data, dims, origin, inv, x0, x1, x2, q, nid, w, dw, u, J):
    """Row ``q`` of the buffers: stencil at ``x``, velocity ``u`` and Jacobian
    ``J[k, a] = du_k/dx_a``. Indexing rows instead of slicing avoids
    creating array views in the hot loop."""
    gx = (x0 - origin[0]) * inv[0]
    gy = (x1 - origin[1]) * inv[1]
    gz = (x2 - origin[2]) * inv[2]
    if not (gx >= 0.0 and gx <= dims[0] - 1 and gy >= 0.0 and gy <= dims[1] - 1
            and gz >= 0.0 and gz <= dims[2] - 1):
        for c in range(8):
            w[q, c] = 0.0
        for k in range(3):
            u[q, k] = 0.0
            for a in range(3):
                J[q, k, a] = 0.0
        return
    i, tx = _cell(gx, dims[0])
    j, ty = _cell(gy, dims[1])
    k, tz = _cell(gz, dims[2])
    c = 0
    for di in range(2):
        fx = tx if di else 1.0 - tx
        dx = inv[0] if di else -inv[0]
        for dj in range(2):
            fy = ty if dj else 1.0 - ty
            dy = inv[1] if dj else -inv[1]
            for dk in range(2):
                fz = tz if dk else 1.0 - tz
                dz = inv[2] if dk else -inv[2]
                nid[q, c] = ((i + di) * dims[1] + j + dj) * dims[2] + k + dk
                w[q, c] = fx * fy * fz
                dw[q, c, 0] = dx * fy * fz
                dw[q, c, 1] = fx * dy * fz
                dw[q, c, 2] = fx * fy * dz
                c += 1
    for m in range(3):
        um = 0.0
        j0 = 0.0
        j1 = 0.0
        j2 = 0.0
        for c in range(8):
            v = data[nid[q, c], m]
            um += w[q, c] * v
            j0 += dw[q, c, 0] * v
            j1 += dw[q, c, 1] * v
            j2 += dw[q, c, 2] * v
        u[q, m] = um
        J[q, m, 0] = j0
        J[q, m, 1] = j1
        J[q, m, 2] = j2


@numba.njit(cache=True, inline="always")
def _pull(acc, q, nid, w, gk, J, gy):
    """Scatter ``w * gk`` into ``acc`` and set ``gy = J^T gk`` (row ``q``)."""
    g0, g1, g2 = gk[q, 0], gk[q, 1], gk[q, 2]
    for c in range(8):
        wc = w[q, c]
        if wc != 0.0:
            r = nid[q, c]
            acc[r, 0] += wc * g0
            acc[r, 1] += wc * g1
            acc[r, 2] += wc * g2
    for a in range(3):
        gy[a] = J[q, 0, a] * g0 + J[q, 1, a] * g1 + J[q, 2, a] * g2


@numba.njit(cache=True)
def backward_kernel(data, dims, origin, spacing, tape, h, rk4, g, acc):
    """Reverse pass of Euler or RK4 integration.

    ``tape[s]`` holds positions at the start of step ``s``; ``g`` enters as
    the loss gradient at the final positions and leaves as the gradient at
    the initial ones. Grid gradients are accumulated into ``acc`` serially,
    so the summation order is fixed.
    """
    inv = 1.0 / spacing
    n_steps, n_pts = tape.shape[0], tape.shape[1]
    nid = np.empty((4, 8), dtype=np.int64)
    w = np.empty((4, 8))
    dw = np.empty((4, 8, 3))
    kk = np.empty((4, 3))
    JJ = np.empty((4, 3, 3))
    gk = np.empty((4, 3))
    gy = np.empty(3)
    for s in range(n_steps - 1, -1, -1):
        for n in range(n_pts):
            x0, x1, x2 = tape[s, n, 0], tape[s, n, 1], tape[s, n, 2]
            _eval(data, dims, origin, inv, x0, x1, x2, 0, nid, w, dw, kk, JJ)
            if not rk4:
                for k in range(3):
                    gk[0, k] = h * g[n, k]
                _pull(acc, 0, nid, w, gk, JJ, gy)
                for k in range(3):
                    g[n, k] += gy[k]
                continue
            _eval(data, dims, origin, inv, x0 + 0.5 * h * kk[0, 0], x1 + 0.5 * h * kk[0, 1],
                  x2 + 0.5 * h * kk[0, 2], 1, nid, w, dw, kk, JJ)
            _eval(data, dims, origin, inv, x0 + 0.5 * h * kk[1, 0], x1 + 0.5 * h * kk[1, 1],
                  x2 + 0.5 * h * kk[1, 2], 2, nid, w, dw, kk, JJ)
            _eval(data, dims, origin, inv, x0 + h * kk[2, 0], x1 + h * kk[2, 1],
                  x2 + h * kk[2, 2], 3, nid, w, dw, kk, JJ)
            for k in range(3):
                gk[0, k] = h / 6.0 * g[n, k]
                gk[1, k] = h / 3.0 * g[n, k]
                gk[2, k] = h / 3.0 * g[n, k]
                gk[3, k] = h / 6.0 * g[n, k]
            # k4 = U(x + h k3), k3 = U(x + h/2 k2), k2 = U(x + h/2 k1), k1 = U(x)
            _pull(acc, 3, nid, w, gk, JJ, gy)
            for k in range(3):
                g[n, k] += gy[k]
                gk[2, k] += h * gy[k]
            _pull(acc, 2, nid, w, gk, JJ, gy)
            for k in range(3):
                g[n, k] += gy[k]
                gk[1, k] += 0.5 * h * gy[k]
            _pull(acc, 1, nid, w, gk, JJ, gy)
            for k in range(3):
                g[n, k] += gy[k]
                gk[0, k] += 0.5 * h * gy[k]
            _pull(acc, 0, nid, w, gk, JJ, gy)
            for k in range(3):
                g[n, k] += gy[k]
