"""Closed-form test surfaces: platonic solids, icospheres, tori, planes."""

import numpy as np

from .ops import subdivide_midpoint
from .trimesh import TriangleMesh


def tetrahedron(scale=1.0, center=(0.0, 0.0, 0.0)):
    v = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)
    f = np.array([[0, 1, 2], [0, 2, 3], [0, 3, 1], [1, 3, 2]])
    return TriangleMesh(v * scale + np.asarray(center, float), f)


def icosahedron(radius=1.0, center=(0.0, 0.0, 0.0)):
    t = (1.0 + 5 ** 0.5) / 2.0
    v = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=float)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    f = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ])
    return TriangleMesh(v * radius + np.asarray(center, float), f)


def icosphere(level=2, radius=1.0, center=(0.0, 0.0, 0.0)):
    """Subdivided icosahedron with every vertex pushed onto the sphere.

    Level ``n`` has ``10 * 4**n + 2`` vertices and ``20 * 4**n`` faces.
    """
    c = np.asarray(center, float)
    m = icosahedron()
    for _ in range(level):
        m = subdivide_midpoint(m, 1)
        v = m.vertices / np.linalg.norm(m.vertices, axis=1, keepdims=True)
        m = m.with_vertices(v)
    return TriangleMesh(m.vertices * radius + c, m.faces)


def cube(size=1.0, origin=(0.0, 0.0, 0.0)):
    """Axis-aligned cube ``[origin, origin + size]^3`` with 12 triangles."""
    v = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], dtype=float)
    f = np.array([
        [0, 1, 3], [0, 3, 2],  # x = 0
        [4, 6, 7], [4, 7, 5],  # x = 1
        [0, 4, 5], [0, 5, 1],  # y = 0
        [2, 3, 7], [2, 7, 6],  # y = 1
        [0, 2, 6], [0, 6, 4],  # z = 0
        [1, 5, 7], [1, 7, 3],  # z = 1
    ])
    return TriangleMesh(v * size + np.asarray(origin, float), f)


def torus(major=2.0, minor=0.5, n_major=24, n_minor=12):
    """Quad torus around the z axis, each quad split into two triangles."""
    u = np.arange(n_major) * 2 * np.pi / n_major
    w = np.arange(n_minor) * 2 * np.pi / n_minor
    uu, ww = np.meshgrid(u, w, indexing="ij")
    x = (major + minor * np.cos(ww)) * np.cos(uu)
    y = (major + minor * np.cos(ww)) * np.sin(uu)
    z = minor * np.sin(ww)
    v = np.stack([x, y, z], -1).reshape(-1, 3)

    def idx(i, j):
        return (i % n_major) * n_minor + (j % n_minor)

    faces = []
    for i in range(n_major):
        for j in range(n_minor):
            a, b, c, d = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            faces += [[a, b, c], [a, c, d]]
    return TriangleMesh(v, faces)


def grid_plane(n=4, size=1.0, z=0.0):
    """Flat ``n x n`` quad grid in the z plane, triangulated, normals +z."""
    xs = np.linspace(0.0, size, n + 1)
    xx, yy = np.meshgrid(xs, xs, indexing="ij")
    v = np.stack([xx.ravel(), yy.ravel(), np.full(xx.size, z)], 1)
    faces = []
    for i in range(n):
        for j in range(n):
            a = i * (n + 1) + j
            b = (i + 1) * (n + 1) + j
            faces += [[a, b, b + 1], [a, b + 1, a + 1]]
    return TriangleMesh(v, faces)


def unit_square():
    """Unit square in the z=0 plane split into two equal triangles."""
    v = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=float)
    return TriangleMesh(v, [[0, 1, 2], [0, 2, 3]])


def radial_surface(base, radius_fn, center=(0.0, 0.0, 0.0)):
    """Reposition a sphere-like mesh so vertex direction ``d`` sits at ``radius_fn(theta, phi) * d``.

    ``theta`` is the polar angle from +z and ``phi`` the azimuth.
    """
    c = np.asarray(center, float)
    d = base.vertices - c
    d = d / np.linalg.norm(d, axis=1, keepdims=True)
    theta = np.arccos(np.clip(d[:, 2], -1.0, 1.0))
    phi = np.arctan2(d[:, 1], d[:, 0])
    r = radius_fn(theta, phi)
    return base.with_vertices(c + d * r[:, None])


def wrinkled_sphere(level=3, amplitude=0.1, frequency=6, scale=1.0, center=(0.0, 0.0, 0.0)):
    """Icosphere with radius ``scale * (1 + a sin(k theta) sin(k phi))``."""
    def radius(theta, phi):
        return scale * (1.0 + amplitude * np.sin(frequency * theta) * np.sin(frequency * phi))

    return radial_surface(icosphere(level, 1.0, center), radius, center)
