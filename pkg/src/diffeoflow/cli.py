"""Command-line interface: ``diffeoflow <command> ...``.

Exit codes
----------
0 success; 1 unexpected internal error; 2 usage error; 3 unreadable or
unwritable file; 4 FrameMismatch; 5 DivergenceDetected; 6 TopologyFailure;
7 ContainmentFailure; 8 any other invalid input.

Failures print one JSON object on a single stderr line:
``{"error": <code>, "message": <text>, "exit_code": <int>}``.
"""

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import errors
from .errors import DiffeoflowError

logger = logging.getLogger("diffeoflow")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_FRAME = 4
EXIT_DIVERGENCE = 5
EXIT_TOPOLOGY = 6
EXIT_CONTAINMENT = 7
EXIT_INVALID = 8


class UsageError(Exception):
    code = "UsageError"


class FileError(Exception):
    code = "IOError"


def _exit_code(exc):
    if isinstance(exc, (UsageError, errors.UnknownKind, errors.EmptyInput)):
        return EXIT_USAGE
    if isinstance(exc, FileError):
        return EXIT_IO
    if isinstance(exc, errors.FrameMismatch):
        return EXIT_FRAME
    if isinstance(exc, errors.DivergenceDetected):
        return EXIT_DIVERGENCE
    if isinstance(exc, errors.TopologyFailure):
        return EXIT_TOPOLOGY
    if isinstance(exc, errors.ContainmentFailure):
        return EXIT_CONTAINMENT
    if isinstance(exc, (DiffeoflowError, ValueError)):
        return EXIT_INVALID
    return EXIT_INTERNAL


def _report(exc, code):
    name = getattr(exc, "code", type(exc).__name__)
    line = json.dumps({"error": name, "message": str(exc), "exit_code": code}, sort_keys=True)
    print(line, file=sys.stderr)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --- file helpers ------------------------------------------------------------

def _read_mesh(path):
    from .mesh import read_mesh
    try:
        return read_mesh(path)
    except DiffeoflowError:
        raise
    except (OSError, ValueError, EOFError) as exc:
        raise FileError(f"cannot read mesh {path}: {exc}") from exc


def _write_mesh(path, mesh):
    from .mesh import write_mesh
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        write_mesh(path, mesh)
    except OSError as exc:
        raise FileError(f"cannot write {path}: {exc}") from exc


def _write_text(path, text):
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    except OSError as exc:
        raise FileError(f"cannot write {path}: {exc}") from exc


def _sha256(path):
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError as exc:
        raise FileError(f"cannot read {path}: {exc}") from exc


def _triple(values, name, cast=float):
    if values is None:
        return None
    if len(values) == 1:
        values = values * 3
    if len(values) != 3:
        raise UsageError(f"--{name} takes one or three values")
    return tuple(cast(v) for v in values)


def _int_list(text, name):
    try:
        out = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"--{name} must be a comma-separated list of integers") from None
    if not out or min(out) < 2:
        raise UsageError(f"--{name} needs grid sizes of at least 2")
    return out


# --- commands ------------------------------------------------------------------

def cmd_build_template(args):
    from .template import TemplateBuildConfig, build_template

    if not args.inputs:
        raise UsageError("build-template needs at least one input mesh")
    meshes = [_read_mesh(p) for p in args.inputs]
    cfg = TemplateBuildConfig(
        resolution=args.resolution, tau=args.tau, margin_voxels=args.margin,
        smooth_iterations=args.smooth_iterations, smooth_lambda=args.smooth_lambda,
        target_edge_length=args.edge_length, remesh_iterations=args.remesh_iterations,
        levels=args.levels)
    family = build_template(meshes, cfg)
    out = Path(args.out)
    files = []
    for i, level in enumerate(family.levels, start=1):
        path = out / f"template_L{i}.ply"
        _write_mesh(path, level)
        files.append(path.name)
    provenance = {
        "config": cfg.to_dict(),
        "inputs": [{"path": str(p), "sha256": _sha256(p)} for p in args.inputs],
        "outputs": files,
        "stats": family.stats,
    }
    _write_text(out / "provenance.json", json.dumps(provenance, indent=2, sort_keys=True) + "\n")
    logger.info("wrote %d template levels to %s", len(files), out)


def cmd_deform(args):
    from .chain import apply_chain, load_manifest

    mesh = _read_mesh(args.mesh)
    try:
        chain = load_manifest(args.manifest, method=args.method, n_steps=args.steps,
                              load_seed=False)
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise FileError(f"cannot read manifest {args.manifest}: {exc}") from exc
    result = apply_chain(chain, seed=mesh, keep_intermediates=False)
    _write_mesh(args.out, result.mesh)


def _f32_chain(chain):
    """Round every stage field to the on-disk precision."""
    from .chain import DeformationChain, Stage
    from .flow_field import FlowField

    stages = tuple(Stage(FlowField(s.field.grid, s.field.data.astype(np.float32)), s.config, s.name)
                   for s in chain.stages)
    return DeformationChain(stages, chain.seed, chain.seed_kind)


def cmd_fit(args):
    from .chain import apply_chain, save_manifest
    from .fitter import FitConfig, LossConfig, fit_chain, fitting_grid, sample_target
    from .integrator import IntegratorConfig

    templates = [_read_mesh(p) for p in args.template]
    white_target = _read_mesh(args.white)
    pial_target = _read_mesh(args.pial) if args.pial else None
    loss_cfg = LossConfig(args.chamfer_weight, args.edge_weight, args.samples, args.edge_rest)
    integ = IntegratorConfig(args.method, args.steps)

    def schedule(dims, iterations):
        return tuple(
            FitConfig(fitting_grid([templates[0]], d, args.grid_margin), lr=args.lr,
                      momentum=args.momentum, iterations=iterations, integrator=integ,
                      clamp_voxels=args.clamp)
            for d in dims)

    out = Path(args.out)
    rows = []

    def record(name, fit):
        for i, st in enumerate(fit.stages, start=1):
            for it, (val, best) in enumerate(zip(st.history, st.best_history)):
                rows.append((name, i, it, repr(val), repr(best)))

    white_cloud = sample_target(white_target, args.samples, args.seed)
    white = fit_chain(templates, white_cloud, schedule(_int_list(args.white_grids, "white-grids"),
                                                      args.iterations), loss_cfg, "template")
    record("white", white)
    white_chain = _f32_chain(white.chain)
    white_mesh = apply_chain(white_chain, keep_intermediates=False).mesh
    seed_file = args.template[min(len(white.stages), len(templates)) - 1]
    try:
        (out / "white").mkdir(parents=True, exist_ok=True)
        save_manifest(out / "white" / "manifest.json", white_chain,
                      seed_path=Path(os.path.relpath(seed_file, out / "white")).as_posix())
    except OSError as exc:
        raise FileError(f"cannot write {out / 'white'}: {exc}") from exc
    _write_mesh(out / "white.ply", white_mesh)

    if pial_target is not None:
        pial_cloud = sample_target(pial_target, args.samples, args.seed + 1)
        pial = fit_chain([white_mesh], pial_cloud,
                         schedule(_int_list(args.pial_grids, "pial-grids"),
                                  args.pial_iterations or args.iterations),
                         loss_cfg, "white")
        record("pial", pial)
        pial_chain = _f32_chain(pial.chain)
        pial_mesh = apply_chain(pial_chain, keep_intermediates=False).mesh
        try:
            (out / "pial").mkdir(parents=True, exist_ok=True)
            save_manifest(out / "pial" / "manifest.json", pial_chain, seed_path="../white.ply")
        except OSError as exc:
            raise FileError(f"cannot write {out / 'pial'}: {exc}") from exc
        _write_mesh(out / "pial.ply", pial_mesh)

    lines = [("chain", "stage", "iteration", "loss", "best_loss")] + rows
    buf = "".join(",".join(str(c) for c in r) + "\n" for r in lines)
    _write_text(out / "loss.csv", buf)


def cmd_metrics(args):
    from .metrics import evaluate_surfaces

    pred = _read_mesh(args.pred)
    gt = _read_mesh(args.gt)
    report = evaluate_surfaces(pred, gt, n_samples=args.samples, seed=args.seed,
                               signed_normals=args.signed_normals)
    text = report.to_json() if args.format == "json" else report.to_csv_row()
    if args.out:
        _write_text(args.out, text)
    else:
        sys.stdout.write(text)


def cmd_gen_field(args):
    from .flow_field import GridSpec, analytic_field, save_field

    try:
        params = json.loads(args.params)
    except json.JSONDecodeError as exc:
        raise UsageError(f"--params is not valid JSON: {exc}") from None
    if not isinstance(params, dict):
        raise UsageError("--params must be a JSON object")
    dims = _triple(args.dims, "dims", int)
    if args.bounds is not None:
        lo, hi = args.bounds[:3], args.bounds[3:]
        grid = GridSpec.from_bounds(lo, hi, dims, args.frame)
    else:
        grid = GridSpec(dims, _triple(args.origin, "origin"), _triple(args.spacing, "spacing"),
                        args.frame)
    try:
        field = analytic_field(args.kind, params, grid)
    except KeyError as exc:
        raise UsageError(f"missing parameter {exc} for kind {args.kind!r}") from None
    try:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        save_field(args.out, field.field)
    except OSError as exc:
        raise FileError(f"cannot write {args.out}: {exc}") from exc


# --- parser ----------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="diffeoflow", description="Flow-field mesh deformation toolkit.")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--threads", type=int, default=None,
                   help="cap on compiled-kernel threads (default: all available)")
    p.add_argument("--log-level", default=None,
                   help="DEBUG, INFO, WARNING or ERROR (default from DIFFEOFLOW_LOG or WARNING)")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    b = sub.add_parser("build-template", help="build a multi-resolution template family")
    b.add_argument("inputs", nargs="*", help="closed training meshes (.ply/.obj)")
    b.add_argument("--out", required=True, help="output directory")
    b.add_argument("--resolution", type=int, default=128)
    b.add_argument("--tau", type=float, default=None, help="iso level in mm (default 1 voxel)")
    b.add_argument("--margin", type=int, default=4, help="grid margin in voxels")
    b.add_argument("--smooth-iterations", type=int, default=10)
    b.add_argument("--smooth-lambda", type=float, default=0.5)
    b.add_argument("--edge-length", type=float, default=None,
                   help="remesh target edge length in mm (default 2 voxels)")
    b.add_argument("--remesh-iterations", type=int, default=5)
    b.add_argument("--levels", type=int, default=3)
    b.set_defaults(func=cmd_build_template)

    d = sub.add_parser("deform", help="apply a chain manifest to a mesh")
    d.add_argument("mesh")
    d.add_argument("manifest")
    d.add_argument("--out", required=True)
    d.add_argument("--method", choices=["euler", "rk4"], default=None)
    d.add_argument("--steps", type=int, default=None)
    d.set_defaults(func=cmd_deform)

    f = sub.add_parser("fit", help="fit white and pial chains to target surfaces")
    f.add_argument("--template", nargs="+", required=True,
                   help="template family, coarsest first")
    f.add_argument("--white", required=True, help="white target surface")
    f.add_argument("--pial", default=None, help="pial target surface")
    f.add_argument("--out", required=True)
    f.add_argument("--white-grids", default="16,24,24", help="flow grid size per white stage")
    f.add_argument("--pial-grids", default="16", help="flow grid size per pial stage")
    f.add_argument("--grid-margin", type=float, default=0.15)
    f.add_argument("--iterations", type=int, default=100)
    f.add_argument("--pial-iterations", type=int, default=None)
    f.add_argument("--lr", type=float, default=10.0)
    f.add_argument("--momentum", type=float, default=0.9)
    f.add_argument("--chamfer-weight", type=float, default=1.0)
    f.add_argument("--edge-weight", type=float, default=2.0)
    f.add_argument("--edge-rest", choices=["zero", "seed"], default="zero",
                   help="edge-loss rest length: zero or the seed mesh's edge lengths")
    f.add_argument("--samples", type=int, default=4000, help="target cloud size")
    f.add_argument("--method", choices=["euler", "rk4"], default="rk4")
    f.add_argument("--steps", type=int, default=30)
    f.add_argument("--clamp", type=float, default=2.0, help="speed clamp in voxels per unit time")
    f.set_defaults(func=cmd_fit)

    m = sub.add_parser("metrics", help="compare a predicted surface with ground truth")
    m.add_argument("pred")
    m.add_argument("gt")
    m.add_argument("--samples", type=int, default=200_000)
    m.add_argument("--format", choices=["json", "csv"], default="json")
    m.add_argument("--signed-normals", action="store_true")
    m.add_argument("--out", default=None, help="write here instead of stdout")
    m.set_defaults(func=cmd_metrics)

    g = sub.add_parser("gen-field", help="sample an analytic velocity field on a grid")
    g.add_argument("kind", help="translation, rigid_rotation, radial or shear")
    g.add_argument("--params", default="{}", help="JSON object of field parameters")
    g.add_argument("--dims", type=int, nargs="+", required=True)
    g.add_argument("--origin", type=float, nargs="+", default=[0.0])
    g.add_argument("--spacing", type=float, nargs="+", default=[1.0])
    g.add_argument("--bounds", type=float, nargs=6, default=None,
                   metavar=("X0", "Y0", "Z0", "X1", "Y1", "Z1"))
    g.add_argument("--frame", default="world")
    g.add_argument("--out", required=True, help="output stem (.ffjson/.ffraw)")
    g.set_defaults(func=cmd_gen_field)
    return p


def _configure(args):
    level = (args.log_level or os.environ.get("DIFFEOFLOW_LOG") or "WARNING").upper()
    if level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        raise UsageError(f"unknown log level {level!r}")
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    logging.getLogger("numba").setLevel(max(logging.WARNING, logging.getLevelName(level)))
    if args.threads is not None:
        import numba
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
        n = min(args.threads, numba.config.NUMBA_NUM_THREADS)
        if n < args.threads:
            logger.warning("only %d threads available; using %d", n, n)
        numba.set_num_threads(n)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("missing command; see diffeoflow --help")
        if getattr(args, "samples", 1) < 1:
            raise UsageError("--samples must be positive")
        _configure(args)
        args.func(args)
    except Exception as exc:  # noqa: BLE001 - every failure becomes a JSON line
        code = _exit_code(exc)
        if code == EXIT_INTERNAL:
            logger.exception("internal error")
        _report(exc, code)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
