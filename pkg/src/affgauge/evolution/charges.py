"""Scalar drivers of gradient lines and the gradient fields they induce.

A tensor charge ``rho_MN`` drives evolution through a declared linear
functional ``w^{MN} rho_MN`` applied *after* covariant differentiation, so
``p_Q = w^{MN} rho_{MN;Q}``.  Scalars use the plain gradient.
"""

from __future__ import annotations

import numpy as np

from ..connections import ConnectionField, CovariantDerivativeField, ZeroConnection
from ..errors import ContractViolation
from ..fields import LOWER, UPPER, ExprField, TensorField, as_points
from ..frames import MetricField
from ..jet import Jet, jeinsum

ZERO_GRADIENT = 1e-12


def flat_metric(dim: int) -> MetricField:
    return MetricField(ExprField.constant(np.eye(dim), (LOWER, LOWER)))


class ChargeDriver:
    """Charge field plus the contraction that turns it into a scalar.

    ``weights`` is a ``(D, D)`` matrix for rank-2 charges (``None`` for
    scalars).  ``conn=None`` means the zero connection.
    """

    def __init__(self, charge: TensorField, conn: ConnectionField | None = None,
                 metric: MetricField | None = None, weights=None, label: str = ""):
        if charge.rank not in (0, 2):
            raise ContractViolation("charges are scalars or rank-2 tensors")
        if charge.rank == 2 and weights is None:
            raise ContractViolation("a rank-2 charge needs a declared contraction")
        self.charge = charge
        self.dim = charge.dim
        self.conn = conn or ZeroConnection(self.dim)
        self.metric = metric or flat_metric(self.dim)
        self.weights = None if weights is None else np.asarray(weights, dtype=float)
        self.label = label

    @classmethod
    def component(cls, charge: TensorField, m: int, n: int, conn=None, metric=None) -> "ChargeDriver":
        """Drive by the single 1-based component ``rho_mn``."""
        w = np.zeros((charge.dim, charge.dim))
        w[m - 1, n - 1] = 1.0
        return cls(charge, conn, metric, w, label=f"rho_{m}{n}")

    @classmethod
    def summed(cls, charge: TensorField, conn=None, metric=None) -> "ChargeDriver":
        """Drive by ``sum_MN rho_MN``."""
        return cls(charge, conn, metric, np.ones((charge.dim, charge.dim)), label="sum")

    def _contract(self, j: Jet) -> Jet:
        if self.weights is None:
            return j
        return _contract_lead(j, self.weights)

    def scalar_jet(self, points, order: int) -> Jet:
        """Jet of ``w . rho``."""
        return self._contract(self.charge.jet(as_points(points, self.dim), order))

    def partial_jet(self, points, order: int) -> Jet:
        """``P_Q = d_Q (w . rho)``."""
        return self.scalar_jet(points, order + 1).grad()

    def covariant_jet(self, points, order: int) -> Jet:
        """``p_Q = w . rho_{;Q}``."""
        pts = as_points(points, self.dim)
        if self.charge.rank == 0:
            return self.partial_jet(pts, order)
        return self._contract(CovariantDerivativeField(self.charge, self.conn).jet(pts, order))

    def momentum(self, points) -> np.ndarray:
        return self.covariant_jet(points, 0).value


def _contract_lead(j: Jet, w: np.ndarray) -> Jet:
    """Contract the two leading value slots with ``w``; remaining slots are kept."""
    rest = "abcdefgh"[: len(j.vshape) - 2]
    return jeinsum(f"mn{rest},mn->{rest}", j, w)


class GradientField(TensorField):
    """``G^{QP} p_P`` as an upper vector field."""

    def __init__(self, driver: ChargeDriver):
        self.driver = driver
        self.dim = driver.dim
        self.variance = (UPPER,)

    def jet(self, points, order: int) -> Jet:
        pts = as_points(points, self.dim)
        return jeinsum("qp,p->q", self.driver.metric.ginv_jet(pts, order), self.driver.covariant_jet(pts, order))


class UnitField(TensorField):
    """Euclidean normalization ``v / |v|`` of a vector field (the evolution direction)."""

    def __init__(self, base: TensorField, floor: float = ZERO_GRADIENT):
        if base.rank != 1:
            raise ContractViolation("only vector fields can be normalized")
        self.base = base
        self.dim = base.dim
        self.variance = base.variance
        self.floor = floor

    def jet(self, points, order: int) -> Jet:
        pts = as_points(points, self.dim)
        v = self.base.jet(pts, order)
        norm2 = jeinsum("q,q->", v, v)
        small = np.flatnonzero(np.sqrt(norm2.value) < self.floor)
        if small.size:
            raise ZeroGradientError(pts[small], self.floor)
        return jeinsum(",q->q", norm2.sqrt().reciprocal(), v)


class ZeroGradientError(ContractViolation):
    def __init__(self, points: np.ndarray, floor: float):
        super().__init__(f"gradient vanishes (< {floor:g}) at {len(points)} point(s), first {points[0].tolist()}")
        self.points = points


def gradient_field(driver: ChargeDriver, points, floor: float = ZERO_GRADIENT) -> tuple[np.ndarray, np.ndarray]:
    """Components ``G^{QP} t_{;P}`` at ``points`` and a mask of points where they vanish."""
    v = GradientField(driver).values(points)
    return v, np.linalg.norm(v, axis=-1) < floor


def unit_gradient(driver: ChargeDriver) -> UnitField:
    return UnitField(GradientField(driver))


def unit(v: np.ndarray, floor: float = ZERO_GRADIENT) -> np.ndarray:
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(n < floor):
        raise ZeroGradientError(np.atleast_2d(v)[np.flatnonzero(n.reshape(-1) < floor)], floor)
    return v / n
