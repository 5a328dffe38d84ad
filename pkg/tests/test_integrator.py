import numpy as np
import pytest

from diffeoflow.errors import NonFiniteInput, OracleUnavailable
from diffeoflow.flow_field import FlowField, GridSpec, analytic_field, negate, zero_field
from diffeoflow.integrator import (
    IntegratorConfig,
    estimate_convergence_order,
    integrate_mesh,
    integrate_point,
    integrate_points,
)
from diffeoflow.mesh import icosphere
from diffeoflow.metrics import self_intersecting_faces


def grid(n=17, r=3.0):
    return GridSpec.from_bounds((-r,) * 3, (r,) * 3, n)


def _smooth_field(g, amp, seed):
    """Smooth random field: a few low-frequency sinusoids."""
    r = np.random.default_rng(seed)
    x = g.node_positions()
    out = np.zeros(x.shape)
    for _ in range(3):
        k = r.normal(size=(3, 3)) * 0.6
        ph = r.uniform(0, 2 * np.pi, 3)
        out += np.sin(x @ k.T + ph)
    return out * (amp / np.linalg.norm(out, axis=-1).max())


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig("midpoint")
    with pytest.raises(ValueError):
        IntegratorConfig("rk4", 0)
    with pytest.raises(ValueError):
        IntegratorConfig("rk4", 4, 0.0)
    assert IntegratorConfig("euler", 8, 2.0).h == 0.25


@pytest.mark.parametrize("method", ["euler", "rk4"])
@pytest.mark.parametrize("n", [1, 7, 30])
def test_constant_field_exact(method, n):
    af = analytic_field("translation", {"c": [0.3, -0.1, 0.2]}, grid())
    x0 = np.array([[0.1, 0.2, 0.3], [-1, 1, 0.5]])
    x = integrate_points(af.field, x0, IntegratorConfig(method, n))
    np.testing.assert_allclose(x, x0 + [0.3, -0.1, 0.2], atol=1e-14)


def test_rotation_rk4_quarter_turn():
    af = analytic_field("rigid_rotation", {"axis": [0, 0, 1], "omega": np.pi / 2}, grid())
    x = integrate_point(af.field, [1, 0, 0], IntegratorConfig("rk4", 32))
    np.testing.assert_allclose(x, [0, 1, 0], atol=1e-6)


def test_rotation_euler_error_linear_in_h():
    af = analytic_field("rigid_rotation", {"axis": [0, 0, 1], "omega": np.pi / 2}, grid())
    errs = [np.linalg.norm(integrate_point(af.field, [1, 0, 0], IntegratorConfig("euler", n)) - [0, 1, 0])
            for n in (32, 64, 128)]
    assert errs[0] > errs[1] > errs[2]
    np.testing.assert_allclose(errs[0] / errs[1], 2.0, rtol=0.05)
    np.testing.assert_allclose(errs[1] / errs[2], 2.0, rtol=0.05)
    # exact Euler map multiplies the radius by (1 + (w h)^2)^(n/2) per full run
    n, wh = 32, np.pi / 2 / 32
    assert np.linalg.norm(integrate_point(af.field, [1, 0, 0], IntegratorConfig("euler", n))) == \
        pytest.approx((1 + wh ** 2) ** (n / 2), rel=1e-12)


def test_radial_rk4():
    af = analytic_field("radial", {"scale": 0.5}, grid())
    x = integrate_point(af.field, [1, 1, 1], IntegratorConfig("rk4", 16))
    np.testing.assert_allclose(x, np.exp(0.5) * np.ones(3), atol=1e-7)


def test_rk4_uses_h_over_six_weighting():
    # one step of dx/ds = a x: the RK4 growth factor is the degree-4 Taylor polynomial
    a = 0.4
    af = analytic_field("radial", {"scale": a}, grid())
    x = integrate_point(af.field, [1, 0, 0], IntegratorConfig("rk4", 1))
    assert x[0] == pytest.approx(1 + a + a**2 / 2 + a**3 / 6 + a**4 / 24, rel=1e-14)


def test_zero_field_mesh_identity():
    m = icosphere(2)
    out = integrate_mesh(m, zero_field(grid()))
    assert np.array_equal(out.vertices, m.vertices)
    assert np.array_equal(out.faces, m.faces) and np.array_equal(out.tags, m.tags)


def test_translation_is_isometry():
    m = icosphere(2)
    out = integrate_mesh(m, analytic_field("translation", {"c": [0.5, 0, 0]}, grid()).field)
    np.testing.assert_allclose(out.vertices, m.vertices + [0.5, 0, 0], atol=1e-14)
    np.testing.assert_allclose(out.edge_lengths(), m.edge_lengths(), atol=1e-13)


def test_rotation_mesh_matches_matrix():
    af = analytic_field("rigid_rotation", {"axis": [1, 1, 0], "omega": 1.0}, grid())
    m = icosphere(3)
    out = integrate_mesh(m, af.field, IntegratorConfig("rk4", 64))
    np.testing.assert_allclose(out.vertices, af.trajectory(1.0, m.vertices), atol=1e-6)


def test_order_estimates():
    af = analytic_field("rigid_rotation", {"axis": [0, 0, 1], "omega": np.pi / 2}, grid(64, 2.0))
    x0 = [[1.0, 0.0, 0.0]]
    e = estimate_convergence_order(af, x0, "euler", [8, 16, 32, 64])
    r = estimate_convergence_order(af, x0, "rk4", [8, 16, 32, 64])
    assert 0.8 <= e.order <= 1.2
    assert 3.5 <= r.order <= 4.5


def test_order_undefined_on_constant_field():
    af = analytic_field("translation", {"c": [1, 0, 0]}, grid())
    est = estimate_convergence_order(af, [[0, 0, 0]], "rk4", [4, 8, 16])
    assert not est.defined and est.order is None
    assert max(est.errors) < 1e-13


def test_order_requires_oracle():
    with pytest.raises(OracleUnavailable):
        estimate_convergence_order(zero_field(grid()), [[0, 0, 0]], "rk4", [4, 8, 16])


def test_nonfinite_vertices_rejected():
    with pytest.raises(NonFiniteInput):
        integrate_points(zero_field(grid()), [[np.nan, 0, 0]])


def test_vertex_order_independent(rng):
    g = grid(9)
    f = FlowField(g, _smooth_field(g, 0.5, 1))
    x = rng.uniform(-1, 1, (100, 3))
    perm = rng.permutation(100)
    a = integrate_points(f, x)
    b = integrate_points(f, x[perm])
    assert np.array_equal(a[perm], b)


def test_substeps_outside_grid_have_zero_slope():
    g = GridSpec.from_bounds((-1,) * 3, (1,) * 3, 5)
    f = FlowField(g, np.broadcast_to([2.0, 0, 0], g.dims + (3,)))
    # steps of 0.5: 0.5 -> 1.0 (on the hull, still inside) -> 1.5, then frozen
    x = integrate_point(f, [0.5, 0, 0], IntegratorConfig("euler", 4))
    assert x[0] == pytest.approx(1.5)
    x = integrate_point(f, [5.0, 0, 0], IntegratorConfig("rk4", 4))
    np.testing.assert_array_equal(x, [5.0, 0, 0])


@pytest.mark.parametrize("seed", range(5))
def test_round_trip_and_no_self_intersections(seed):
    g = grid(17, 2.0)
    f = FlowField(g, _smooth_field(g, 2 * g.spacing[0], seed))
    m = icosphere(3)
    cfg = IntegratorConfig("rk4", 32)
    fwd = integrate_mesh(m, f, cfg)
    back = integrate_mesh(fwd, negate(f), cfg)
    assert np.abs(back.vertices - m.vertices).max() <= 1e-5 * g.diameter
    assert self_intersecting_faces(fwd)[0] == 0
