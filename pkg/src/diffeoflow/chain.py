"""Sequential composition of flow-field deformations.

A chain maps a seed surface through stages ``mesh_i = integrate(mesh_{i-1},
U_i)``. Seeded with a template it yields the white (or any single) surface;
seeded with a predicted white surface it yields the pial surface with a
vertex-for-vertex correspondence to the white one.
"""

import json
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .errors import ConnectivityMismatch, FrameMismatch, NotClosed
from .flow_field import load_field, save_field
from .integrator import IntegratorConfig, integrate_mesh
from .mesh import read_mesh

SEED_KINDS = ("template", "white")
MANIFEST_VERSION = 1


@dataclass(frozen=True)
class Stage:
    field: object
    config: IntegratorConfig = IntegratorConfig()
    name: str | None = None


@dataclass(frozen=True)
class DeformationChain:
    stages: tuple
    seed: object = None
    seed_kind: str = "template"

    def __post_init__(self):
        stages = tuple(s if isinstance(s, Stage) else Stage(*s) for s in self.stages)
        if not stages:
            raise ValueError("a deformation chain needs at least one stage")
        if self.seed_kind not in SEED_KINDS:
            raise ValueError(f"seed_kind must be one of {SEED_KINDS}")
        object.__setattr__(self, "stages", stages)
        check_frames(stages)

    def __len__(self):
        return len(self.stages)

    def with_seed(self, seed, seed_kind=None):
        return DeformationChain(self.stages, seed, seed_kind or self.seed_kind)


@dataclass(frozen=True)
class ChainResult:
    mesh: object
    intermediates: list = dc_field(default_factory=list)


def check_frames(stages):
    frames = {s.field.grid.frame for s in stages}
    if len(frames) > 1:
        raise FrameMismatch(f"stage fields live in different world frames: {sorted(frames)}")


def apply_chain(chain, seed=None, keep_intermediates=True):
    """Run every stage of ``chain`` in order.

    Returns a :class:`ChainResult` whose ``intermediates`` hold the output of
    each stage (the last one is ``mesh``); empty in streaming mode.
    """
    mesh = chain.seed if seed is None else seed
    if mesh is None:
        raise ValueError("chain has no seed mesh")
    out = []
    for st in chain.stages:
        mesh = integrate_mesh(mesh, st.field, st.config)
        if keep_intermediates:
            out.append(mesh)
    return ChainResult(mesh, out)


def white_to_pial(white_mesh, pial_stages):
    """Deform a white surface into a pial surface through ``pial_stages``."""
    if not white_mesh.is_closed:
        raise NotClosed("the white surface seeding a pial chain must be closed")
    chain = DeformationChain(tuple(pial_stages), white_mesh, "white")
    return apply_chain(chain, keep_intermediates=False).mesh


@dataclass(frozen=True)
class Thickness:
    values: np.ndarray
    mean: float
    max: float


def cortical_thickness(white_mesh, pial_mesh):
    """Distance between corresponding white and pial vertices."""
    if (white_mesh.faces.shape != pial_mesh.faces.shape
            or not np.array_equal(white_mesh.faces, pial_mesh.faces)
            or not np.array_equal(white_mesh.tags, pial_mesh.tags)):
        raise ConnectivityMismatch("white and pial meshes do not share faces and vertex tags")
    d = np.linalg.norm(pial_mesh.vertices - white_mesh.vertices, axis=1)
    return Thickness(d, float(d.mean()), float(d.max()))


def save_manifest(path, chain, flow_names=None, seed_path=None):
    """Write ``chain`` as a JSON manifest plus one flow-field file pair per stage.

    Field files are written next to the manifest and referenced by stem.
    """
    path = Path(path)
    names = flow_names or [s.name or f"stage{i + 1}" for i, s in enumerate(chain.stages)]
    entries = []
    for name, st in zip(names, chain.stages):
        save_field(path.parent / name, getattr(st.field, "field", st.field))
        entries.append({"flow": name, "method": st.config.method,
                        "n_steps": st.config.n_steps, "total_time": st.config.total_time})
    doc = {"version": MANIFEST_VERSION, "stages": entries}
    if seed_path is not None:
        doc["seed"] = {"path": str(seed_path), "kind": chain.seed_kind}
    path.write_text(json.dumps(doc, indent=2) + "\n")
    return path


def load_manifest(path, method=None, n_steps=None, load_seed=True):
    """Read a chain manifest; ``method`` and ``n_steps`` override every stage."""
    path = Path(path)
    doc = json.loads(path.read_text())
    stages = []
    for e in doc["stages"]:
        cfg = IntegratorConfig(method or e.get("method", "rk4"),
                               n_steps or e.get("n_steps", 30),
                               e.get("total_time", 1.0))
        stages.append(Stage(load_field(path.parent / e["flow"]), cfg, e["flow"]))
    seed = None
    kind = "template"
    if "seed" in doc:
        kind = doc["seed"].get("kind", "template")
        if load_seed and doc["seed"].get("path"):
            sp = Path(doc["seed"]["path"])
            seed = read_mesh(sp if sp.is_absolute() else path.parent / sp)
    return DeformationChain(tuple(stages), seed, kind)
