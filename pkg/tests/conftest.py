"""Shared fixtures and brute-force oracles.

The oracles here are deliberately naive (double loops, all-pairs tests) so
that they share no code path with the package under test.
"""

import os

import numpy as np
import pytest

os.environ.setdefault("NUMBA_NUM_THREADS", str(max(1, os.cpu_count() or 1)))

# verdict lines written by the acceptance suite, repeated in the summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def brute_nn(a, b):
    """Distance from every point of ``a`` to its nearest point of ``b`` and its index."""
    d = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1))
    return d.min(1), d.argmin(1)


def brute_chamfer(a, b):
    return 0.5 * brute_nn(a, b)[0].mean() + 0.5 * brute_nn(b, a)[0].mean()


def brute_hausdorff(a, b):
    return max(brute_nn(a, b)[0].max(), brute_nn(b, a)[0].max())


def _seg_tri(p, q, a, b, c):
    """Does segment pq cross the interior of triangle abc? Scalar loop version."""
    e1, e2 = b - a, c - a
    d = q - p
    h = np.cross(d, e2)
    det = np.dot(e1, h)
    if abs(det) < 1e-14:
        return False
    s = p - a
    u = np.dot(s, h) / det
    if u <= 1e-12 or u >= 1 - 1e-12:
        return False
    qv = np.cross(s, e1)
    v = np.dot(d, qv) / det
    if v <= 1e-12 or u + v >= 1 - 1e-12:
        return False
    t = np.dot(e2, qv) / det
    return 1e-12 < t < 1 - 1e-12


def brute_tri_tri(t1, t2):
    """Non-coplanar proper intersection via edge-triangle crossings."""
    for T, S in ((t1, t2), (t2, t1)):
        for i in range(3):
            if _seg_tri(T[i], T[(i + 1) % 3], *S):
                return True
    return False


def brute_sif(vertices, faces):
    """All-pairs self-intersection count with adjacency exclusion."""
    F = len(faces)
    flagged = np.zeros(F, bool)
    for i in range(F):
        for j in range(i + 1, F):
            if set(faces[i]) & set(faces[j]):
                continue
            if brute_tri_tri(vertices[faces[i]], vertices[faces[j]]):
                flagged[i] = flagged[j] = True
    return int(flagged.sum()), 100.0 * flagged.sum() / F
