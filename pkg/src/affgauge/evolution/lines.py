"""Fixed-step RK4 integration of unit-normalized vector fields."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import ContractViolation, EvaluationError
from ..fields import TensorField, as_points
from .charges import ZERO_GRADIENT, ChargeDriver

DEFAULT_STEP = 1e-2
NORM_DRIFT = 1e-6

VectorFn = Callable[[np.ndarray], np.ndarray]


def unit_rows(v: np.ndarray, floor: float = ZERO_GRADIENT) -> np.ndarray:
    """Row-normalize; rows below ``floor`` become NaN (undefined direction)."""
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(n >= floor, v / n, np.nan)


def field_direction(f: TensorField | VectorFn) -> VectorFn:
    """Unit direction function ``(m, D) -> (m, D)`` of a vector field or raw callable."""
    if isinstance(f, TensorField):
        if f.rank != 1:
            raise ContractViolation("gradient lines follow vector fields")
        return lambda X: unit_rows(f.jet(X, 0).value)
    return lambda X: unit_rows(np.asarray(f(X), dtype=float))


def rk4_flow(direction: VectorFn, X0: np.ndarray, step: float, n_steps: int) -> tuple[np.ndarray, np.ndarray]:
    """Trajectories ``(n_steps + 1, m, D)`` and per-member stop index.

    A member whose direction becomes undefined at any RK4 stage is frozen:
    its remaining samples are NaN and ``stop[i]`` is its last valid index.
    """
    if step <= 0:
        raise ContractViolation("step must be positive")
    X = np.array(X0, dtype=float, copy=True)
    m, D = X.shape
    traj = np.full((n_steps + 1, m, D), np.nan)
    traj[0] = X
    alive = np.ones(m, dtype=bool)
    stop = np.full(m, n_steps)
    for k in range(n_steps):
        if not alive.any():
            break
        idx = np.flatnonzero(alive)
        x = X[idx]
        k1 = direction(x)
        k2 = direction(x + 0.5 * step * k1)
        k3 = direction(x + 0.5 * step * k2)
        k4 = direction(x + step * k3)
        nxt = x + step / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        ok = np.isfinite(nxt).all(axis=1)
        dead = idx[~ok]
        stop[dead] = k
        alive[dead] = False
        X[idx[ok]] = nxt[ok]
        traj[k + 1, idx[ok]] = nxt[ok]
    return traj, stop


@dataclass
class GradientLine:
    """Samples ``(x0, point, tangent)`` of an integral curve of a unit field."""

    x0: np.ndarray
    points: np.ndarray
    tangents: np.ndarray
    step: float
    integrator: str = "rk4"
    accumulated_action: float = float("nan")
    truncated: str | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.x0)

    @property
    def start(self) -> np.ndarray:
        return self.points[0]

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]

    def samples(self):
        return list(zip(self.x0, self.points, self.tangents))

    def segment(self, i: int, j: int) -> "GradientLine":
        return GradientLine(self.x0[i:j], self.points[i:j], self.tangents[i:j], self.step, self.integrator)


def integrate_gradient_line(f: TensorField | VectorFn, start, step: float = DEFAULT_STEP, n_steps: int = 100,
                            driver: ChargeDriver | None = None, x0_start: float = 0.0) -> GradientLine:
    """RK4 integral curve of the unit-normalized ``f`` from ``start``.

    The parameter is the arc length ``x0`` (unit Euclidean speed).  If the
    field vanishes on the way the line is truncated at the last good sample
    and ``truncated`` says where.  With a ``driver`` the elementary action
    of the line is accumulated.
    """
    direction = field_direction(f)
    X0 = as_points(start, len(np.asarray(start).reshape(-1)))
    if not np.isfinite(direction(X0)).all():
        raise ContractViolation(f"field vanishes at the start point {X0[0].tolist()}")
    traj, stop = rk4_flow(direction, X0, step, n_steps)
    last = int(stop[0])
    pts = traj[: last + 1, 0]
    tangents = direction(pts)
    keep = np.isfinite(tangents).all(axis=1)
    truncated = None
    if last < n_steps or not keep.all():
        bad = int(np.argmin(keep)) if not keep.all() else last + 1
        last = min(last, bad - 1)
        pts, tangents = pts[: last + 1], tangents[: last + 1]
        truncated = f"field vanished after {last} of {n_steps} steps near x0 = {x0_start + (last + 1) * step:.6g}"
    drift = np.abs(np.linalg.norm(tangents, axis=1) - 1.0).max()
    if drift > NORM_DRIFT:
        raise EvaluationError(f"tangent norm drift {drift:.3e} exceeds {NORM_DRIFT:g}")
    x0 = x0_start + step * np.arange(len(pts))
    line = GradientLine(x0, pts, tangents, step, truncated=truncated)
    if driver is not None and len(pts) > 1:
        line.accumulated_action = elementary_action(driver, pts)
    return line


def elementary_action(driver: ChargeDriver, points: np.ndarray) -> float:
    """Trapezoidal ``sum 1/2 (p_i + p_{i+1}) . (x_{i+1} - x_i)``."""
    pts = np.asarray(points, dtype=float)
    p = driver.momentum(pts)
    dx = np.diff(pts, axis=0)
    return float(np.einsum("kq,kq->", 0.5 * (p[1:] + p[:-1]), dx))


@dataclass
class ConvergenceReport:
    steps: tuple[float, ...]
    endpoints: np.ndarray
    differences: tuple[float, ...]
    order: float


def endpoint_convergence(f: TensorField | VectorFn, start, length: float, step: float = DEFAULT_STEP,
                         levels: int = 3) -> ConvergenceReport:
    """Observed order from endpoints at ``step, step/2, ...`` over a fixed parameter length."""
    direction = field_direction(f)
    X0 = as_points(start, len(np.asarray(start).reshape(-1)))
    steps, ends = [], []
    for lvl in range(levels):
        h = step / 2 ** lvl
        n = int(round(length / h))
        traj, stop = rk4_flow(direction, X0, h, n)
        if stop[0] < n:
            raise EvaluationError("line truncated during the convergence study")
        steps.append(h)
        ends.append(traj[-1, 0])
    ends = np.asarray(ends)
    diffs = tuple(float(np.linalg.norm(ends[i] - ends[i + 1])) for i in range(levels - 1))
    orders = [np.log2(diffs[i] / diffs[i + 1]) for i in range(len(diffs) - 1) if diffs[i + 1] > 0]
    order = float(orders[-1]) if orders else float("inf")
    return ConvergenceReport(tuple(steps), ends, diffs, order)
