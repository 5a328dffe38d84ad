import json

import numpy as np
import pytest

from diffeoflow.chain import (
    DeformationChain,
    Stage,
    apply_chain,
    cortical_thickness,
    load_manifest,
    save_manifest,
    white_to_pial,
)
from diffeoflow.errors import ConnectivityMismatch, FrameMismatch
from diffeoflow.flow_field import FlowField, GridSpec, analytic_field, zero_field
from diffeoflow.integrator import IntegratorConfig
from diffeoflow.mesh import icosphere, write_mesh


def grid(frame="world", n=9):
    return GridSpec.from_bounds((-3,) * 3, (3,) * 3, n, frame)


def translation(c, g=None):
    return analytic_field("translation", {"c": c}, g or grid()).field


def test_zero_field_identity():
    m = icosphere(2)
    res = apply_chain(DeformationChain((Stage(zero_field(grid())),), m))
    assert np.array_equal(res.mesh.vertices, m.vertices)
    assert len(res.intermediates) == 1


def test_constant_fields_compose_additively():
    m = icosphere(2)
    cs = [[0.1, 0, 0], [0, -0.2, 0.05], [0.3, 0.1, 0]]
    chain = DeformationChain(tuple(Stage(translation(c)) for c in cs), m)
    out = apply_chain(chain).mesh
    np.testing.assert_allclose(out.vertices, m.vertices + np.sum(cs, 0), atol=1e-13)


def test_rotation_composition():
    m = icosphere(2)
    angles = [0.3, -0.5, 0.9]
    cfg = IntegratorConfig("rk4", 64)
    stages = tuple(Stage(analytic_field("rigid_rotation", {"omega": a}, grid(n=17)).field, cfg)
                   for a in angles)
    out = apply_chain(DeformationChain(stages, m)).mesh
    total = analytic_field("rigid_rotation", {"omega": sum(angles)}, grid(n=17))
    np.testing.assert_allclose(out.vertices, total.trajectory(1.0, m.vertices), atol=1e-5)


def test_faces_and_tags_invariant_and_intermediates():
    m = icosphere(2)
    chain = DeformationChain((Stage(translation([0.1, 0, 0])), Stage(translation([0, 0.1, 0]))), m)
    res = apply_chain(chain)
    for mesh in res.intermediates:
        assert np.array_equal(mesh.faces, m.faces) and np.array_equal(mesh.tags, m.tags)
    assert res.intermediates[-1] is res.mesh
    assert apply_chain(chain, keep_intermediates=False).intermediates == []


def test_split_application_is_bit_identical():
    m = icosphere(2)
    g = grid(n=7)
    r = np.random.default_rng(0)
    stages = tuple(Stage(FlowField(g, r.normal(scale=0.1, size=g.dims + (3,)))) for _ in range(3))
    whole = apply_chain(DeformationChain(stages, m)).mesh
    mid = apply_chain(DeformationChain(stages[:1], m)).mesh
    rest = apply_chain(DeformationChain(stages[1:], mid)).mesh
    assert np.array_equal(whole.vertices, rest.vertices)


def test_frames_must_agree():
    with pytest.raises(FrameMismatch):
        DeformationChain((Stage(zero_field(grid("a"))), Stage(zero_field(grid("b")))))
    # different resolutions in one frame are fine
    DeformationChain((Stage(zero_field(grid(n=5))), Stage(zero_field(grid(n=9)))))


def test_chain_needs_a_stage():
    with pytest.raises(ValueError):
        DeformationChain(())


def test_white_to_pial_radial():
    white = icosphere(3)
    pial = white_to_pial(white, [Stage(analytic_field("radial", {"scale": np.log(1.1)}, grid(n=17)).field,
                                       IntegratorConfig("rk4", 64))])
    np.testing.assert_allclose(np.linalg.norm(pial.vertices, axis=1), 1.1, atol=1e-8)
    assert np.array_equal(pial.faces, white.faces) and np.array_equal(pial.tags, white.tags)


def test_white_to_pial_zero_is_identity():
    white = icosphere(2)
    assert np.array_equal(white_to_pial(white, [Stage(zero_field(grid()))]).vertices, white.vertices)


def test_thickness():
    w = icosphere(2)
    assert cortical_thickness(w, w).max == 0.0
    t = cortical_thickness(w, w.with_vertices(w.vertices * 1.1))
    np.testing.assert_allclose(t.values, 0.1, atol=1e-12)
    c = np.array([0.3, -0.4, 0.0])
    t = cortical_thickness(w, w.with_vertices(w.vertices + c))
    np.testing.assert_allclose(t.values, 0.5, atol=1e-12)
    with pytest.raises(ConnectivityMismatch):
        cortical_thickness(w, icosphere(1))


def test_manifest_round_trip(tmp_path):
    m = icosphere(2)
    write_mesh(tmp_path / "seed.ply", m)
    g = grid(n=5)
    r = np.random.default_rng(1)
    fields = [FlowField(g, r.normal(size=g.dims + (3,)).astype(np.float32)) for _ in range(2)]
    chain = DeformationChain((Stage(fields[0], IntegratorConfig("euler", 10)),
                              Stage(fields[1], IntegratorConfig("rk4", 20))), m)
    save_manifest(tmp_path / "chain.json", chain, seed_path="seed.ply")
    doc = json.loads((tmp_path / "chain.json").read_text())
    assert doc["seed"] == {"path": "seed.ply", "kind": "template"}
    assert [s["method"] for s in doc["stages"]] == ["euler", "rk4"]
    back = load_manifest(tmp_path / "chain.json")
    assert np.array_equal(back.seed.vertices, m.vertices)
    for a, b in zip(back.stages, chain.stages):
        assert np.array_equal(a.field.data, b.field.data) and a.config == b.config
    assert np.array_equal(apply_chain(back).mesh.vertices, apply_chain(chain).mesh.vertices)
    over = load_manifest(tmp_path / "chain.json", method="rk4", n_steps=3)
    assert all(s.config == IntegratorConfig("rk4", 3) for s in over.stages)
