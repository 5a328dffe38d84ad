"""Stationary vector fields on regular grids with trilinear interpolation.

Grids are node-centred: ``origin`` is the world position of node ``(0, 0, 0)``
and node ``(i, j, k)`` sits at ``origin + (i, j, k) * spacing``. The field is
interpolated inside the box spanned by the node centres and is zero outside
it, so points that leave the grid stop moving.
"""

import json
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
from scipy.linalg import expm

from ._kernels import sample_kernel
from .errors import GridError, UnknownKind

# corner offsets of a cell, in (di, dj, dk) order
_CORNERS = np.array([[i, j, k] for i in (0, 1) for j in (0, 1) for k in (0, 1)])


@dataclass(frozen=True)
class GridSpec:
    """Geometry of a regular node-centred grid."""

    dims: tuple
    origin: tuple
    spacing: tuple
    frame: str = "world"

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        origin = tuple(float(o) for o in self.origin)
        spacing = tuple(float(s) for s in self.spacing)
        if len(dims) != 3 or len(origin) != 3 or len(spacing) != 3:
            raise GridError("dims, origin and spacing must have three components")
        if min(dims) < 2:
            raise GridError(f"every grid axis needs at least 2 nodes, got {dims}")
        if min(spacing) <= 0 or not all(np.isfinite(spacing)):
            raise GridError(f"spacing must be positive, got {spacing}")
        if not all(np.isfinite(origin)):
            raise GridError("origin must be finite")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "spacing", spacing)

    @classmethod
    def from_bounds(cls, lo, hi, dims, frame="world"):
        lo = np.asarray(lo, float)
        hi = np.asarray(hi, float)
        dims = np.broadcast_to(np.asarray(dims, int), (3,))
        return cls(tuple(dims), tuple(lo), tuple((hi - lo) / (dims - 1)), frame)

    @property
    def lower(self):
        return np.asarray(self.origin)

    @property
    def upper(self):
        return np.asarray(self.origin) + (np.asarray(self.dims) - 1) * np.asarray(self.spacing)

    @property
    def diameter(self):
        return float(np.linalg.norm(self.upper - self.lower))

    @property
    def voxel_diagonal(self):
        return float(np.linalg.norm(self.spacing))

    @property
    def n_nodes(self):
        return int(np.prod(self.dims))

    def node_positions(self):
        """(H, W, D, 3) world coordinates of every node."""
        axes = [o + s * np.arange(n) for o, s, n in zip(self.origin, self.spacing, self.dims)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


@dataclass(frozen=True)
class Stencil:
    """Trilinear stencil of a batch of points.

    ``nodes`` are flat node indices ``(N, 8)``, ``weights`` the interpolation
    weights (zero for points outside the grid) and ``dweights`` their spatial
    gradients ``(N, 8, 3)`` in world units.
    """

    nodes: np.ndarray
    weights: np.ndarray
    dweights: np.ndarray
    inside: np.ndarray


def trilinear_stencil(grid, points):
    x = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    dims = np.asarray(grid.dims)
    sp = np.asarray(grid.spacing)
    g = (x - np.asarray(grid.origin)) / sp
    inside = np.all((g >= 0) & (g <= dims - 1), axis=1)
    i0 = np.clip(np.floor(g), 0, dims - 2).astype(np.int64)
    t = np.where(inside[:, None], g - i0, 0.0)
    # (N, 8, 3) per-axis factor, t for the upper corner and 1-t for the lower
    c = _CORNERS[None]
    fac = np.where(c == 1, t[:, None, :], 1.0 - t[:, None, :])
    dfac = np.where(c == 1, 1.0, -1.0) / sp
    w = fac[..., 0] * fac[..., 1] * fac[..., 2]
    dw = np.stack([
        dfac[..., 0] * fac[..., 1] * fac[..., 2],
        fac[..., 0] * dfac[..., 1] * fac[..., 2],
        fac[..., 0] * fac[..., 1] * dfac[..., 2],
    ], axis=-1)
    out = ~inside
    w[out] = 0.0
    dw[out] = 0.0
    idx = i0[:, None, :] + c
    nodes = (idx[..., 0] * dims[1] + idx[..., 1]) * dims[2] + idx[..., 2]
    return Stencil(nodes, w, dw, inside)


@dataclass(frozen=True, eq=False)
class FlowField:
    """Stationary 3-channel velocity field sampled on a :class:`GridSpec`.

    ``data`` has shape ``(H, W, D, 3)`` in mm per unit flow time.
    """

    grid: GridSpec
    data: np.ndarray

    def __post_init__(self):
        d = np.array(self.data, dtype=np.float64)
        if d.shape != tuple(self.grid.dims) + (3,):
            raise GridError(f"data shape {d.shape} does not match grid dims {self.grid.dims}")
        if not np.all(np.isfinite(d)):
            raise GridError("flow field contains non-finite values")
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    @property
    def flat(self):
        return self.data.reshape(-1, 3)

    def sample(self, points):
        """Interpolated velocity at each of ``points`` ``(N, 3)``."""
        x = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
        out = np.empty_like(x)
        g = self.grid
        sample_kernel(self.flat, np.asarray(g.dims, dtype=np.int64), np.asarray(g.origin),
                      np.asarray(g.spacing), x, out)
        return out

    def sample_with_jacobian(self, points):
        st = trilinear_stencil(self.grid, points)
        vals = self.flat[st.nodes]
        u = np.einsum("nc,nck->nk", st.weights, vals)
        # J[n, k, a] = d u_k / d x_a
        jac = np.einsum("nca,nck->nka", st.dweights, vals)
        return u, jac, st

    def max_speed(self):
        return float(np.max(np.linalg.norm(self.data, axis=-1)))

    def with_data(self, data):
        return FlowField(self.grid, data)


def interpolate(field, x):
    """Trilinear interpolation of ``field`` at a single world point."""
    return field.sample(np.asarray(x, float).reshape(1, 3))[0]


def zero_field(grid):
    return FlowField(grid, np.zeros(tuple(grid.dims) + (3,)))


def negate(field):
    return FlowField(field.grid, -field.data)


def _rotation_matrix(axis, angle):
    a = np.asarray(axis, float)
    a = a / np.linalg.norm(a)
    k = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)


@dataclass(frozen=True, eq=False)
class AnalyticField:
    """A sampled closed-form field together with its exact flow map."""

    kind: str
    params: dict
    field: FlowField
    _velocity: object = dc_field(repr=False)
    _flow: object = dc_field(repr=False)

    @property
    def grid(self):
        return self.field.grid

    def velocity(self, points):
        return self._velocity(np.asarray(points, float).reshape(-1, 3))

    def trajectory(self, s, points):
        """Exact position at flow time ``s`` of particles starting at ``points``."""
        return self._flow(float(s), np.asarray(points, float).reshape(-1, 3))


def analytic_field(kind, params, grid):
    """Sample a named closed-form velocity field on ``grid``.

    Kinds and parameters:

    ``translation``     ``c``: constant velocity.
    ``rigid_rotation``  ``axis``, ``omega``, ``center``: ``omega * axis x (x - center)``.
    ``radial``          ``scale``, ``center``: ``scale * (x - center)``.
    ``shear``           ``A``, ``center``: ``A (x - center)``.
    """
    params = dict(params)
    center = np.asarray(params.get("center", (0.0, 0.0, 0.0)), float)
    if kind == "translation":
        c = np.asarray(params["c"], float)

        def vel(x):
            return np.broadcast_to(c, x.shape).copy()

        def flow(s, x):
            return x + s * c
    elif kind == "rigid_rotation":
        axis = np.asarray(params.get("axis", (0.0, 0.0, 1.0)), float)
        axis = axis / np.linalg.norm(axis)
        omega = float(params["omega"])

        def vel(x):
            return omega * np.cross(axis, x - center)

        def flow(s, x):
            return center + (x - center) @ _rotation_matrix(axis, omega * s).T
    elif kind == "radial":
        a = float(params["scale"])

        def vel(x):
            return a * (x - center)

        def flow(s, x):
            return center + np.exp(a * s) * (x - center)
    elif kind == "shear":
        A = np.asarray(params["A"], float).reshape(3, 3)

        def vel(x):
            return (x - center) @ A.T

        def flow(s, x):
            return center + (x - center) @ expm(s * A).T
    else:
        raise UnknownKind(f"unknown analytic field kind {kind!r}; "
                          "expected translation, rigid_rotation, radial or shear")
    nodes = grid.node_positions().reshape(-1, 3)
    data = vel(nodes).reshape(tuple(grid.dims) + (3,))
    return AnalyticField(kind, params, FlowField(grid, data), vel, flow)


# file format: <stem>.ffjson header + <stem>.ffraw little-endian float32 blob,
# node (i, j, k) at offset ((k * W + j) * H + i) * 3 with channels innermost

def _stem(path):
    p = Path(path)
    return p.with_suffix("") if p.suffix in (".ffjson", ".ffraw") else p


def save_field(path, field):
    """Write ``field`` as ``<stem>.ffjson`` + ``<stem>.ffraw``; returns the header path."""
    stem = _stem(path)
    g = field.grid
    header = {
        "dims": list(g.dims),
        "origin": list(g.origin),
        "spacing": list(g.spacing),
        "dtype": "f32",
        "order": "x-fastest",
        "channels": 3,
        "frame": g.frame,
    }
    hpath = stem.with_name(stem.name + ".ffjson")
    rpath = stem.with_name(stem.name + ".ffraw")
    hpath.write_text(json.dumps(header, indent=2) + "\n")
    blob = np.ascontiguousarray(field.data.transpose(2, 1, 0, 3), dtype="<f4")
    rpath.write_bytes(blob.tobytes())
    return hpath


def load_field(path):
    stem = _stem(path)
    hpath = stem.with_name(stem.name + ".ffjson")
    rpath = stem.with_name(stem.name + ".ffraw")
    header = json.loads(hpath.read_text())
    if header.get("dtype", "f32") != "f32" or header.get("order", "x-fastest") != "x-fastest":
        raise GridError(f"{hpath}: unsupported dtype/order")
    if header.get("channels", 3) != 3:
        raise GridError(f"{hpath}: expected 3 channels")
    dims = tuple(header["dims"])
    grid = GridSpec(dims, header["origin"], header["spacing"], header.get("frame", "world"))
    raw = np.frombuffer(rpath.read_bytes(), dtype="<f4")
    n = int(np.prod(dims)) * 3
    if raw.size != n:
        raise GridError(f"{rpath}: expected {n} float32 values, found {raw.size}")
    data = raw.reshape(dims[2], dims[1], dims[0], 3).transpose(2, 1, 0, 3)
    return FlowField(grid, data.astype(np.float64))
