"""Explicit integration of the flow ODE dx/ds = U(x) for mesh vertices.

Every vertex is advected independently, so all routines work on ``(N, 3)``
batches. Two schemes are available: forward Euler and the classical
fourth-order Runge-Kutta method.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteInput, OracleUnavailable
from .flow_field import AnalyticField

logger = logging.getLogger(__name__)

METHODS = ("euler", "rk4")
DEFAULT_STEPS = 30


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk4"
    n_steps: int = DEFAULT_STEPS
    total_time: float = 1.0

    def __post_init__(self):
        m = str(self.method).lower()
        if m not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        object.__setattr__(self, "method", m)
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps}")
        object.__setattr__(self, "n_steps", int(self.n_steps))
        if not self.total_time > 0:
            raise ValueError(f"total_time must be positive, got {self.total_time}")
        object.__setattr__(self, "total_time", float(self.total_time))

    @property
    def h(self):
        return self.total_time / self.n_steps


def _flow(field):
    return field.field if isinstance(field, AnalyticField) else field


def euler_step(field, x, h):
    return x + h * field.sample(x)


def rk4_step(field, x, h):
    k1 = field.sample(x)
    k2 = field.sample(x + 0.5 * h * k1)
    k3 = field.sample(x + 0.5 * h * k2)
    k4 = field.sample(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_points(field, points, config=IntegratorConfig(), record=False):
    """Advance every point of ``points`` through ``config.n_steps`` steps.

    Parameters
    ----------
    field : FlowField or AnalyticField
    points : (N, 3) array_like
    config : IntegratorConfig
    record : bool
        Also return the list of positions at the start of every step, which
        is what :func:`diffeoflow.fitter.backprop_through_integration` replays.

    Returns
    -------
    x : (N, 3) final positions, or ``(x, tape)`` when ``record`` is set.
    """
    f = _flow(field)
    x = np.array(points, dtype=np.float64).reshape(-1, 3)
    bad = ~np.all(np.isfinite(x), axis=1)
    if bad.any():
        raise NonFiniteInput(f"vertex {int(np.flatnonzero(bad)[0])} has a non-finite position")
    step = rk4_step if config.method == "rk4" else euler_step
    h = config.h
    tape = []
    for _ in range(config.n_steps):
        if record:
            tape.append(x)
        x = step(f, x, h)
    return (x, tape) if record else x


def integrate_point(field, x0, config=IntegratorConfig()):
    return integrate_points(field, np.asarray(x0, float).reshape(1, 3), config)[0]


def integrate_mesh(mesh, field, config=IntegratorConfig()):
    """Deform ``mesh`` by the flow map of ``field``; faces and tags are kept."""
    return mesh.with_vertices(integrate_points(field, mesh.vertices, config))


@dataclass(frozen=True)
class ConvergenceEstimate:
    """Observed order of accuracy from successive step refinements.

    ``order`` is ``None`` when the errors sit at round-off level and no rate
    can be measured; ``defined`` is then ``False``.
    """

    order: float | None
    step_counts: tuple
    errors: tuple
    rates: tuple
    defined: bool


def estimate_convergence_order(field_with_oracle, x0, method, step_counts, total_time=1.0,
                               floor=1e-13):
    """Mean observed order ``log(e_i / e_{i+1}) / log(n_{i+1} / n_i)``.

    ``e`` is the largest Euclidean terminal-position error over the points in
    ``x0`` against the analytic flow map. Errors below ``floor`` times the
    point scale are treated as exact.
    """
    if not isinstance(field_with_oracle, AnalyticField):
        raise OracleUnavailable("convergence order needs a field with a closed-form flow map")
    counts = [int(n) for n in step_counts]
    if len(counts) < 3:
        raise ValueError("need at least three step counts")
    ratios = [b / a for a, b in zip(counts, counts[1:])]
    if any(r <= 1 for r in ratios) or not np.allclose(ratios, ratios[0]):
        raise ValueError(f"step counts must form an increasing geometric progression: {counts}")
    x0 = np.asarray(x0, float).reshape(-1, 3)
    exact = field_with_oracle.trajectory(total_time, x0)
    scale = max(1.0, float(np.max(np.abs(exact))))
    errors = []
    for n in counts:
        cfg = IntegratorConfig(method, n, total_time)
        xn = integrate_points(field_with_oracle.field, x0, cfg)
        errors.append(float(np.max(np.linalg.norm(xn - exact, axis=1))))
    if min(errors) <= floor * scale:
        logger.info("errors at round-off level %s; order undefined", errors)
        return ConvergenceEstimate(None, tuple(counts), tuple(errors), (), False)
    rates = tuple(float(np.log(e0 / e1) / np.log(r))
                  for e0, e1, r in zip(errors, errors[1:], ratios))
    return ConvergenceEstimate(float(np.mean(rates)), tuple(counts), tuple(errors), rates, True)
