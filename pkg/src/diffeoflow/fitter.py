"""Direct fitting of stage flow fields to target surfaces.

The loss is a weighted sum of a symmetric Chamfer term (deforming mesh
vertices against a fixed cloud sampled from the target surface) and a mean
squared edge-length term. Gradients with respect to the field grid values are
propagated by hand through every Euler or RK4 substep and the trilinear
interpolation, then fed to momentum gradient descent.
"""

import logging
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.spatial import cKDTree

from ._kernels import backward_kernel
from .chain import DeformationChain, Stage, apply_chain
from .errors import DivergenceDetected, EmptyTarget, MissingForwardTape
from .flow_field import FlowField, GridSpec, zero_field
from .integrator import IntegratorConfig, integrate_points
from .mesh import edge_set, sample_surface_uniform

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LossConfig:
    """Loss weights.

    ``edge_rest`` is ``"zero"`` for plain mean squared edge length or
    ``"seed"`` to penalise deviation from the seed mesh's edge lengths.
    """

    chamfer_weight: float = 1.0
    edge_weight: float = 0.1
    n_target_samples: int = 4000
    edge_rest: str = "zero"

    def __post_init__(self):
        if self.chamfer_weight < 0 or self.edge_weight < 0:
            raise ValueError("loss weights must be non-negative")
        if self.chamfer_weight == 0 and self.edge_weight == 0:
            raise ValueError("loss weights cannot both be zero")
        if self.edge_rest not in ("zero", "seed"):
            raise ValueError("edge_rest must be 'zero' or 'seed'")
        if self.n_target_samples < 1:
            raise ValueError("need at least one target sample")


@dataclass(frozen=True)
class LossValue:
    total: float
    chamfer: float
    edge: float
    grad: np.ndarray
    ties: bool = False


def sample_target(mesh, n, seed=0):
    """Fixed target cloud drawn uniformly from the target surface."""
    return sample_surface_uniform(mesh, n, seed).points


def loss(vertices, target, edges, config=LossConfig(), rest=None):
    """Loss value and its exact gradient with respect to ``vertices``.

    Chamfer is the mean of the two one-sided mean nearest-neighbour
    distances. Nearest-neighbour assignments are held fixed when
    differentiating; ``ties`` flags points with two equally near neighbours,
    where the gradient is not defined.

    Parameters
    ----------
    vertices : (N, 3) array
    target : (M, 3) array
    edges : (E, 2) int array
    config : LossConfig
    rest : (E,) array, optional
        Rest lengths; zero when omitted.
    """
    x = np.asarray(vertices, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64).reshape(-1, 3)
    if len(y) == 0:
        raise EmptyTarget("target cloud is empty")
    grad = np.zeros_like(x)
    ch = 0.0
    ties = False
    if config.chamfer_weight > 0:
        d_xy, i_xy = cKDTree(y).query(x, k=2 if len(y) > 1 else 1)
        d_yx, i_yx = cKDTree(x).query(y, k=2 if len(x) > 1 else 1)
        if d_xy.ndim == 2:
            ties |= bool(np.any(d_xy[:, 1] - d_xy[:, 0] <= 1e-9 * (1.0 + d_xy[:, 1])))
            d_xy, i_xy = d_xy[:, 0], i_xy[:, 0]
        if d_yx.ndim == 2:
            ties |= bool(np.any(d_yx[:, 1] - d_yx[:, 0] <= 1e-9 * (1.0 + d_yx[:, 1])))
            d_yx, i_yx = d_yx[:, 0], i_yx[:, 0]
        ch = 0.5 * d_xy.mean() + 0.5 * d_yx.mean()
        w = config.chamfer_weight
        diff = x - y[i_xy]
        u = diff / np.where(d_xy > 0, d_xy, np.inf)[:, None]
        grad += (0.5 * w / len(x)) * u
        diff = x[i_yx] - y
        u = diff / np.where(d_yx > 0, d_yx, np.inf)[:, None]
        for k in range(3):
            grad[:, k] += (0.5 * w / len(y)) * np.bincount(i_yx, weights=u[:, k], minlength=len(x))
    el = 0.0
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if config.edge_weight > 0 and len(edges):
        e = x[edges[:, 1]] - x[edges[:, 0]]
        length = np.linalg.norm(e, axis=1)
        r = np.zeros(len(edges)) if rest is None else np.asarray(rest, dtype=np.float64)
        el = float(np.mean((length - r) ** 2))
        coef = 2.0 * config.edge_weight / len(edges) * (length - r) / np.where(length > 0, length, np.inf)
        ge = coef[:, None] * e
        for k in range(3):
            grad[:, k] += np.bincount(edges[:, 1], weights=ge[:, k], minlength=len(x))
            grad[:, k] -= np.bincount(edges[:, 0], weights=ge[:, k], minlength=len(x))
    total = config.chamfer_weight * ch + config.edge_weight * el
    return LossValue(float(total), float(ch), el, grad, ties)


def backprop_through_integration(field, tape, config, upstream):
    """Gradient of a scalar loss with respect to the field's grid values.

    Parameters
    ----------
    field : FlowField
        The field used in the forward pass.
    tape : list of (N, 3) arrays
        Positions at the start of each step, as returned by
        ``integrate_points(..., record=True)``.
    config : IntegratorConfig
    upstream : (N, 3) array
        Loss gradient with respect to the final positions.

    Returns
    -------
    grad_field : (H, W, D, 3) array
    grad_points : (N, 3) array
        Gradient with respect to the initial positions.
    """
    if tape is None or len(tape) != config.n_steps:
        raise MissingForwardTape(
            f"need {config.n_steps} recorded steps, got {0 if tape is None else len(tape)}")
    g = np.array(upstream, dtype=np.float64).reshape(-1, 3)
    grid = field.grid
    acc = np.zeros((grid.n_nodes, 3))
    backward_kernel(np.ascontiguousarray(field.flat), np.asarray(grid.dims, dtype=np.int64),
                    np.asarray(grid.origin), np.asarray(grid.spacing),
                    np.ascontiguousarray(np.stack(tape)), config.h,
                    config.method == "rk4", g, acc)
    return acc.reshape(tuple(grid.dims) + (3,)), g


@dataclass(frozen=True)
class FitConfig:
    """One stage of fitting.

    ``grid`` is the stage's flow grid; ``clamp_voxels`` bounds every node's
    speed to that many (smallest) grid spacings per unit flow time.
    """

    grid: GridSpec
    lr: float = 1.0
    momentum: float = 0.9
    iterations: int = 200
    integrator: IntegratorConfig = IntegratorConfig()
    clamp_voxels: float = 2.0
    divergence_factor: float = 10.0
    divergence_patience: int = 50

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if self.iterations < 1:
            raise ValueError("need at least one iteration")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")

    @property
    def max_speed(self):
        return self.clamp_voxels * min(self.grid.spacing) / self.integrator.total_time


@dataclass
class FitResult:
    field: FlowField
    mesh: object
    history: list
    best_history: list
    best_loss: float
    best_iteration: int
    chamfer: float


def _clamp(data, vmax):
    n = np.linalg.norm(data, axis=-1, keepdims=True)
    return data * np.minimum(1.0, vmax / np.where(n > 0, n, 1.0))


def fit_stage(seed_mesh, target_cloud, fit_config, loss_config=LossConfig()):
    """Fit one flow field that carries ``seed_mesh`` onto ``target_cloud``.

    Starts from the zero field. Each iteration integrates the seed, evaluates
    the loss, backpropagates to the grid and takes a momentum step followed
    by the speed clamp. The field with the lowest loss seen is returned.

    Raises
    ------
    EmptyTarget
    DivergenceDetected
        Loss stayed above ``divergence_factor`` times the initial loss for
        ``divergence_patience`` consecutive iterations.
    """
    cfg = fit_config
    target = np.asarray(target_cloud, dtype=np.float64).reshape(-1, 3)
    if len(target) == 0:
        raise EmptyTarget("target cloud is empty")
    edges = edge_set(seed_mesh).edges
    rest = None
    if loss_config.edge_rest == "seed":
        v = seed_mesh.vertices
        rest = np.linalg.norm(v[edges[:, 1]] - v[edges[:, 0]], axis=1)
    field = zero_field(cfg.grid)
    data = np.zeros_like(field.data)
    vel = np.zeros_like(data)
    vmax = cfg.max_speed
    history, best_history = [], []
    best = (np.inf, data, -1, 0.0)
    initial = None
    strikes = 0
    for it in range(cfg.iterations + 1):
        field = FlowField(cfg.grid, data)
        x, tape = integrate_points(field, seed_mesh.vertices, cfg.integrator, record=True)
        lv = loss(x, target, edges, loss_config, rest)
        history.append(lv.total)
        if initial is None:
            initial = lv.total
        if lv.total < best[0]:
            best = (lv.total, data, it, lv.chamfer)
        best_history.append(best[0])
        if lv.total > cfg.divergence_factor * initial:
            strikes += 1
            if strikes >= cfg.divergence_patience:
                raise DivergenceDetected(
                    f"loss {lv.total:.6g} above {cfg.divergence_factor}x initial {initial:.6g} "
                    f"for {strikes} iterations")
        else:
            strikes = 0
        if it == cfg.iterations:
            break
        grad, _ = backprop_through_integration(field, tape, cfg.integrator, lv.grad)
        vel = cfg.momentum * vel + grad
        data = _clamp(data - cfg.lr * vel, vmax)
    loss_best, data, it_best, ch_best = best
    field = FlowField(cfg.grid, data)
    mesh = seed_mesh.with_vertices(integrate_points(field, seed_mesh.vertices, cfg.integrator))
    logger.info("stage fit: loss %.6g -> %.6g (iteration %d)", initial, loss_best, it_best)
    return FitResult(field, mesh, history, best_history, loss_best, it_best, ch_best)


def fitting_grid(meshes, dims=16, margin=0.15, frame="world"):
    """Flow grid over the joint bounding box of ``meshes`` padded by ``margin``
    times the largest extent."""
    pts = np.concatenate([np.asarray(m.vertices if hasattr(m, "vertices") else m).reshape(-1, 3)
                          for m in meshes])
    lo, hi = pts.min(0), pts.max(0)
    pad = margin * float((hi - lo).max())
    return GridSpec.from_bounds(lo - pad, hi + pad, dims, frame)


@dataclass
class ChainFit:
    chain: DeformationChain
    mesh: object
    stages: list = dc_field(default_factory=list)

    @property
    def chamfers(self):
        return [s.chamfer for s in self.stages]


def fit_chain(seeds, target_cloud, fit_configs, loss_config=LossConfig(), seed_kind="template"):
    """Fit stages one after another, earlier stages frozen.

    ``seeds`` gives the starting mesh of every stage (a template family
    entry, or the same mesh repeated). Stage ``i`` starts from ``seeds[i]``
    carried through the already fitted stages ``1..i-1``.
    """
    stages, results = [], []
    for i, cfg in enumerate(fit_configs):
        seed = seeds[min(i, len(seeds) - 1)]
        start = apply_chain(DeformationChain(tuple(stages), seed), keep_intermediates=False).mesh \
            if stages else seed
        res = fit_stage(start, target_cloud, cfg, loss_config)
        results.append(res)
        stages.append(Stage(res.field, cfg.integrator, f"stage{i + 1}"))
    final_seed = seeds[min(len(fit_configs), len(seeds)) - 1]
    chain = DeformationChain(tuple(stages), final_seed, seed_kind)
    mesh = apply_chain(chain, keep_intermediates=False).mesh
    return ChainFit(chain, mesh, results)


@dataclass(frozen=True)
class PipelineConfig:
    """White and pial stage schedules plus the shared loss settings."""

    white: tuple
    pial: tuple
    loss: LossConfig = LossConfig()
    seed: int = 0


def fit_pipeline(white_target, pial_target, template_family, config):
    """Fit a white chain from the template family, then a pial chain seeded
    by the fitted white surface.

    Returns ``(white_fit, pial_fit)``; the pial mesh shares faces and tags
    with the white mesh.
    """
    levels = list(getattr(template_family, "levels", template_family))
    n_target = config.loss.n_target_samples
    white_cloud = sample_target(white_target, n_target, config.seed)
    pial_cloud = sample_target(pial_target, n_target, config.seed + 1)
    white = fit_chain(levels, white_cloud, config.white, config.loss, "template")
    pial = fit_chain([white.mesh], pial_cloud, config.pial, config.loss, "white")
    return white, pial
