import json

import numpy as np
import pytest

from diffeoflow.cli import main
from diffeoflow.flow_field import GridSpec, analytic_field, load_field
from diffeoflow.mesh import icosphere, read_mesh, torus, write_mesh
from diffeoflow.mesh.shapes import wrinkled_sphere
from diffeoflow.metrics import evaluate_surfaces


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def error_line(err):
    lines = [ln for ln in err.splitlines() if ln.startswith("{")]
    assert len(lines) == 1
    doc = json.loads(lines[0])
    assert set(doc) == {"error", "exit_code", "message"}
    return doc


@pytest.fixture
def spheres(tmp_path):
    a, b = tmp_path / "a.ply", tmp_path / "b.ply"
    write_mesh(a, icosphere(3, radius=1.0, center=(-0.4, 0, 0)))
    write_mesh(b, icosphere(3, radius=1.0, center=(0.4, 0, 0)))
    return a, b


# --- usage and exit codes ---------------------------------------------------------------

def test_no_command_is_usage_error(capsys):
    code, _, err = run(capsys)
    assert code == 2 and error_line(err)["error"] == "UsageError"


def test_unknown_flag_is_usage_error(capsys, tmp_path):
    code, _, err = run(capsys, "metrics", "a", "b", "--bogus")
    assert code == 2 and error_line(err)["exit_code"] == 2


def test_build_template_errors(capsys, tmp_path):
    code, _, err = run(capsys, "build-template", "--out", tmp_path / "t")
    assert code == 2
    code, _, err = run(capsys, "build-template", tmp_path / "missing.ply", "--out", tmp_path / "t")
    assert code == 3 and error_line(err)["error"] == "IOError"
    bad = tmp_path / "bad.ply"
    bad.write_bytes(b"not a mesh\n")
    assert run(capsys, "build-template", bad, "--out", tmp_path / "t")[0] == 3
    write_mesh(tmp_path / "torus.ply", torus(2.0, 0.7))
    code, _, err = run(capsys, "build-template", tmp_path / "torus.ply", "--out", tmp_path / "t",
                       "--resolution", 32)
    assert code == 6 and error_line(err)["error"] == "TopologyFailure"


# --- build-template ---------------------------------------------------------------------------

def test_build_template_two_spheres(capsys, spheres, tmp_path):
    out = tmp_path / "tpl"
    code, _, err = run(capsys, "build-template", *spheres, "--out", out, "--resolution", 40)
    assert code == 0, err
    levels = [read_mesh(out / f"template_L{i}.ply") for i in (1, 2, 3)]
    assert all(m.euler_characteristic() == 2 for m in levels)
    assert levels[0].n_faces < levels[1].n_faces < levels[2].n_faces
    prov = json.loads((out / "provenance.json").read_text())
    assert prov["config"]["resolution"] == 40
    assert [i["path"] for i in prov["inputs"]] == [str(p) for p in spheres]
    assert all(len(i["sha256"]) == 64 for i in prov["inputs"])


# --- gen-field --------------------------------------------------------------------------------

def test_gen_field_translation_is_constant_blob(capsys, tmp_path):
    stem = tmp_path / "t"
    code, _, err = run(capsys, "gen-field", "translation", "--params", '{"c": [0.5, -1, 2]}',
                       "--dims", 4, 5, 6, "--origin", 0, "--spacing", 0.5, "--out", stem)
    assert code == 0, err
    raw = np.fromfile(str(stem) + ".ffraw", dtype="<f4").reshape(-1, 3)
    assert raw.shape == (120, 3)
    assert np.array_equal(raw, np.tile(np.float32([0.5, -1, 2]), (120, 1)))
    hdr = json.loads((tmp_path / "t.ffjson").read_text())
    assert hdr["dims"] == [4, 5, 6]


def test_gen_field_rotation_matches_analytic(capsys, tmp_path):
    code, _, _ = run(capsys, "gen-field", "rigid_rotation", "--params", '{"omega": 0.7}',
                     "--dims", 9, "--bounds", -1, -1, -1, 1, 1, 1, "--out", tmp_path / "r")
    assert code == 0
    f = load_field(tmp_path / "r")
    want = analytic_field("rigid_rotation", {"omega": 0.7}, GridSpec.from_bounds((-1,) * 3, (1,) * 3, 9))
    np.testing.assert_allclose(f.data, want.field.data, atol=1e-7)


@pytest.mark.parametrize("args", [["spiral", "--params", "{}"],
                                  ["translation", "--params", "{}"],
                                  ["translation", "--params", "[1]"],
                                  ["translation", "--params", "{bad"]])
def test_gen_field_bad_input(capsys, tmp_path, args):
    code, _, err = run(capsys, "gen-field", *args, "--dims", 4, "--out", tmp_path / "x")
    assert code == 2
    error_line(err)


# --- deform -------------------------------------------------------------------------------------

def _manifest(path, stages):
    path.write_text(json.dumps({"version": 1, "stages": stages}))
    return path


def test_deform_zero_field_is_identity(capsys, tmp_path):
    m = icosphere(2)
    write_mesh(tmp_path / "m.ply", m)
    run(capsys, "gen-field", "translation", "--params", '{"c": [0, 0, 0]}', "--dims", 5,
        "--bounds", -2, -2, -2, 2, 2, 2, "--out", tmp_path / "z")
    man = _manifest(tmp_path / "c.json", [{"flow": "z", "method": "rk4", "n_steps": 10}])
    code, _, err = run(capsys, "deform", tmp_path / "m.ply", man, "--out", tmp_path / "o.ply")
    assert code == 0, err
    assert (tmp_path / "o.ply").read_bytes() == (tmp_path / "m.ply").read_bytes()


def test_deform_rotation_matches_oracle(capsys, tmp_path):
    m = icosphere(2)
    write_mesh(tmp_path / "m.ply", m)
    run(capsys, "gen-field", "rigid_rotation", "--params", '{"omega": 0.8}', "--dims", 17,
        "--bounds", -2, -2, -2, 2, 2, 2, "--out", tmp_path / "r")
    man = _manifest(tmp_path / "c.json", [{"flow": "r", "method": "euler", "n_steps": 3}])
    code, _, _ = run(capsys, "deform", tmp_path / "m.ply", man, "--out", tmp_path / "o.ply",
                     "--method", "rk4", "--steps", 64)
    assert code == 0
    c, s = np.cos(0.8), np.sin(0.8)
    want = m.vertices @ np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]]).T
    np.testing.assert_allclose(read_mesh(tmp_path / "o.ply").vertices, want, atol=1e-5)


def test_deform_frame_mismatch(capsys, tmp_path):
    write_mesh(tmp_path / "m.ply", icosphere(1))
    for name, frame in (("a", "mni"), ("b", "native")):
        run(capsys, "gen-field", "translation", "--params", '{"c": [0, 0, 0]}', "--dims", 4,
            "--bounds", -2, -2, -2, 2, 2, 2, "--frame", frame, "--out", tmp_path / name)
    man = _manifest(tmp_path / "c.json", [{"flow": "a"}, {"flow": "b"}])
    code, _, err = run(capsys, "deform", tmp_path / "m.ply", man, "--out", tmp_path / "o.ply")
    assert code == 4 and error_line(err)["error"] == "FrameMismatch"


def test_deform_missing_manifest(capsys, tmp_path):
    write_mesh(tmp_path / "m.ply", icosphere(1))
    code, _, _ = run(capsys, "deform", tmp_path / "m.ply", tmp_path / "none.json", "--out", tmp_path / "o.ply")
    assert code == 3


# --- fit ------------------------------------------------------------------------------------------

FAST_FIT = ["--white-grids", "10", "--pial-grids", "10", "--iterations", 15, "--samples", 1500,
            "--steps", 10]


def test_fit_self_target_near_zero(capsys, tmp_path):
    m = icosphere(3)
    write_mesh(tmp_path / "m.ply", m)
    code, _, err = run(capsys, "fit", "--template", tmp_path / "m.ply", "--white", tmp_path / "m.ply",
                       "--pial", tmp_path / "m.ply", "--out", tmp_path / "o", *FAST_FIT,
                       "--samples", 20000, "--edge-rest", "seed")
    assert code == 0, err
    # a sampled target is matched by the seed only up to sampling noise, which
    # lets vertices slide along the surface; the fields stay small and the
    # surface stays put
    for name in ("white", "pial"):
        assert load_field(tmp_path / "o" / name / "stage1").max_speed() <= 0.1 * 2.0
    white, pial = read_mesh(tmp_path / "o" / "white.ply"), read_mesh(tmp_path / "o" / "pial.ply")
    assert np.array_equal(white.tags, m.tags) and np.array_equal(pial.tags, white.tags)
    assert np.abs(np.linalg.norm(white.vertices, axis=1) - 1.0).max() <= 0.02
    rows = (tmp_path / "o" / "loss.csv").read_text().splitlines()
    assert rows[0] == "chain,stage,iteration,loss,best_loss"
    assert len(rows) == 1 + 2 * 16


def test_fit_wrinkled_target_and_manifest_replay(capsys, tmp_path):
    tpl = icosphere(3, radius=1.1)
    target = wrinkled_sphere(5, 0.1, 6)
    write_mesh(tmp_path / "tpl.ply", tpl)
    write_mesh(tmp_path / "w.ply", target)
    code, _, err = run(capsys, "fit", "--template", tmp_path / "tpl.ply", "--white", tmp_path / "w.ply",
                       "--out", tmp_path / "o", "--white-grids", "12,16", "--iterations", 60,
                       "--samples", 3000)
    assert code == 0, err
    white = read_mesh(tmp_path / "o" / "white.ply")
    before = evaluate_surfaces(tpl, target, 50_000, seed=0).chamfer_mm
    after = evaluate_surfaces(white, target, 50_000, seed=0).chamfer_mm
    assert after < 0.5 * before
    assert not (tmp_path / "o" / "pial").exists()
    # the manifest (relative seed path) replays the written mesh exactly
    code, _, _ = run(capsys, "deform", tmp_path / "tpl.ply", tmp_path / "o" / "white" / "manifest.json",
                     "--out", tmp_path / "again.ply")
    assert code == 0
    assert (tmp_path / "again.ply").read_bytes() == (tmp_path / "o" / "white.ply").read_bytes()
    doc = json.loads((tmp_path / "o" / "white" / "manifest.json").read_text())
    assert doc["seed"] == {"path": "../../tpl.ply", "kind": "template"}


def test_fit_divergence_exit_code(capsys, tmp_path):
    write_mesh(tmp_path / "a.ply", icosphere(2))
    write_mesh(tmp_path / "b.ply", icosphere(2, radius=1.3))
    code, _, err = run(capsys, "fit", "--template", tmp_path / "a.ply", "--white", tmp_path / "b.ply",
                       "--out", tmp_path / "o", "--white-grids", "8", "--iterations", 80,
                       "--lr", 1e6, "--clamp", 1e6, "--steps", 5, "--samples", 500)
    assert code == 5 and error_line(err)["error"] == "DivergenceDetected"


# --- metrics -------------------------------------------------------------------------------------

def test_metrics_self(capsys, tmp_path):
    write_mesh(tmp_path / "m.ply", icosphere(3))
    code, out, _ = run(capsys, "metrics", tmp_path / "m.ply", tmp_path / "m.ply", "--samples", 5000)
    assert code == 0
    doc = json.loads(out)
    assert doc["chamfer_mm"] == 0.0 and doc["sif_percent"] == 0.0
    assert doc["chamfer_normals"] == pytest.approx(1.0)


def test_metrics_concentric_and_repeatable(capsys, tmp_path):
    write_mesh(tmp_path / "a.ply", icosphere(5))
    write_mesh(tmp_path / "b.ply", icosphere(5, radius=1.2))
    args = ["metrics", tmp_path / "a.ply", tmp_path / "b.ply", "--samples", 50_000, "--format", "csv"]
    _, first, _ = run(capsys, "--seed", 3, *args)
    _, second, _ = run(capsys, "--seed", 3, *args)
    assert first == second
    header, row = first.splitlines()
    ch = float(dict(zip(header.split(","), row.split(",")))["chamfer_mm"])
    assert 0.2 - 1e-3 <= ch <= 0.2 + 0.02
    run(capsys, "--seed", 3, *args[:-2], "--out", tmp_path / "r.json")
    assert json.loads((tmp_path / "r.json").read_text())["seed"] == 3


def test_log_level_validation(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("DIFFEOFLOW_LOG", "chatty")
    code, _, _ = run(capsys, "gen-field", "translation", "--params", '{"c": [0, 0, 0]}', "--dims", 4,
                     "--out", tmp_path / "x")
    assert code == 2
