"""Curvature tensors, their divergence, charges and the Yang-Mills residual.

``K[M, N, P, Q] = d_P G[M,N,Q] - d_Q G[M,N,P] + G[M,H,P] G[H,N,Q] - G[H,N,P] G[M,H,Q]``
with ``G`` the connection coefficients ``gamma[M, N, P]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .connections import ConnectionField, GaugeConnection, HolonomicConnection, covariant_jet
from .errors import ContractViolation
from .fields import LOWER, UPPER, CoordinateMap, TensorField, as_points, evaluate_field
from .frames import FrameField, MetricField, ReferenceSystemStack, apply_frame_transformation
from .jet import Jet, jeinsum

ZERO_DIRECTION = 1e-14


def curvature_from_jet(gamma: Jet) -> Jet:
    """Curvature jet (one order lower than ``gamma``)."""
    order = gamma.order - 1
    dg = gamma.grad()  # dg[M, N, Q, P] = d_P gamma[M, N, Q]
    g0 = gamma.truncate(order)
    out = dg.transpose(0, 1, 3, 2) - dg
    out = out + jeinsum("mhp,hnq->mnpq", g0, g0)
    return out - jeinsum("hnp,mhq->mnpq", g0, g0)


class CurvatureTensor(TensorField):
    """Curvature of a connection as a differentiable rank-4 field."""

    def __init__(self, conn: ConnectionField):
        self.conn = conn
        self.dim = conn.dim
        self.variance = (UPPER, LOWER, LOWER, LOWER)

    @property
    def kind(self) -> str:
        return self.conn.kind

    def jet(self, points, order: int) -> Jet:
        return curvature_from_jet(self.conn.jet(as_points(points, self.dim), order + 1))

    def components(self, p) -> np.ndarray:
        return evaluate_field(self, p)

    def frame_transformed(self, k: FrameField) -> "TensorField":
        return FrameTransformedCurvature(self, k)


class FrameTransformedCurvature(TensorField):
    """``C_k K B_k`` on the first index pair; derivative slots untouched."""

    def __init__(self, base: CurvatureTensor, k: FrameField):
        self.base, self.k = base, k
        self.dim = base.dim
        self.variance = base.variance

    def jet(self, points, order: int) -> Jet:
        pts = as_points(points, self.dim)
        bk, ck = self.k.jets(pts, order)
        inner = jeinsum("hqpr,qn->hnpr", self.base.jet(pts, order), bk)
        return jeinsum("mh,hnpr->mnpr", ck, inner)


def curvature(conn: ConnectionField, p) -> np.ndarray:
    return evaluate_field(CurvatureTensor(conn), p)


class LoweredCurvature(TensorField):
    def __init__(self, K: CurvatureTensor, metric: MetricField):
        self.K, self.metric = K, metric
        self.dim = K.dim
        self.variance = (LOWER,) * 4

    def jet(self, points, order: int) -> Jet:
        pts = as_points(points, self.dim)
        return jeinsum("mh,hnpq->mnpq", self.metric.g_jet(pts, order), self.K.jet(pts, order))


def lower_curvature(K: CurvatureTensor, metric: MetricField, p) -> np.ndarray:
    """``K_MNPQ = G_MH K^H_NPQ``."""
    return evaluate_field(LoweredCurvature(K, metric), p)


class CurvatureDivergence(TensorField):
    """``G^{PP'} K^M_{NPQ:P'}``, indexed ``[M, N, Q]``."""

    def __init__(self, K: CurvatureTensor, metric: MetricField, conn: ConnectionField | None = None):
        self.K, self.metric = K, metric
        self.conn = conn if conn is not None else K.conn
        self.dim = K.dim
        self.variance = (UPPER, LOWER, LOWER)

    def jet(self, points, order: int) -> Jet:
        pts = as_points(points, self.dim)
        dk = covariant_jet(self.K.jet(pts, order + 1), self.K.variance, self.conn.jet(pts, order))
        return jeinsum("pr,mnpqr->mnq", self.metric.ginv_jet(pts, order), dk)


def curvature_divergence(K: CurvatureTensor, metric: MetricField, conn: ConnectionField | None, p) -> np.ndarray:
    return evaluate_field(CurvatureDivergence(K, metric, conn), p)


# -- directions, charges, currents ---------------------------------------------
def unit_direction(v: np.ndarray) -> np.ndarray:
    """``eps^Q = v^Q / |v|`` with the Euclidean norm (batched over leading axes)."""
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norm < ZERO_DIRECTION):
        raise ContractViolation("evolution direction vanishes")
    return v / norm


def dual_direction(G: np.ndarray, eps: np.ndarray) -> np.ndarray:
    """``eps_bar_Q = G_QH eps^H / G_00`` with ``G_00 = G_MN eps^M eps^N``."""
    lowered = np.einsum("...qh,...h->...q", G, eps)
    g00 = np.einsum("...q,...q->...", lowered, eps)
    return lowered / g00[..., None]


@dataclass(frozen=True)
class ChargeCurrent:
    rho: np.ndarray          # rho^M_N0
    rho_lower: np.ndarray    # rho_MN0 = G_MH rho^H_N0
    current: np.ndarray      # j^M_NQ = rho^M_N0 eps_bar_Q
    epsilon: np.ndarray
    epsilon_bar: np.ndarray

    def closure_residual(self) -> float:
        """|eps^Q eps_bar_Q - 1|."""
        return float(abs(self.epsilon @ self.epsilon_bar - 1.0))


def extract_charge(stack: ReferenceSystemStack, direction, p, metric: MetricField | None = None,
                   evolution_metric: MetricField | None = None) -> ChargeCurrent:
    """Charge and current of ``stack`` seen along ``direction`` at ``p``.

    The divergence uses the stack's holonomic connection and ``metric``
    (default: the stack metric).  ``eps_bar`` uses ``evolution_metric``
    (default: same metric).
    """
    pts = as_points(p, stack.dim)
    metric = metric if metric is not None else stack.metric()
    evolution_metric = evolution_metric if evolution_metric is not None else metric
    conn = HolonomicConnection(stack, metric)
    div = CurvatureDivergence(CurvatureTensor(conn), metric, conn).jet(pts, 0).value[0]
    eps = unit_direction(np.asarray(direction, dtype=float))
    eps_bar = dual_direction(evolution_metric.G_at(pts[0]), eps)
    rho = div @ eps
    rho_lower = metric.G_at(pts[0]) @ rho
    return ChargeCurrent(rho, rho_lower, np.einsum("mn,q->mnq", rho, eps_bar), eps, eps_bar)


@dataclass(frozen=True)
class YangMillsReport:
    residual: np.ndarray          # (n, D, D, D) per point and component
    closure: float                # max |eps . eps_bar - 1|
    degenerate: int               # components with vanishing gradient (residual set to 0)

    @property
    def max_residual(self) -> float:
        return float(np.abs(self.residual).max()) if self.residual.size else 0.0


def yang_mills_residual(stackF: ReferenceSystemStack, stackG: ReferenceSystemStack, points,
                        direction=None) -> YangMillsReport:
    """Residual ``K^{:P}_{..Q} - rho eps_bar_Q`` with ``rho = K^{:P}_{..Q} eps^Q``.

    The curvature and its divergence come from ``stackF`` (holonomic
    connection, stack metric).  Raising and ``eps_bar`` use the metric of
    ``stackG``, the geometry in which the evolution happens.  With
    ``direction=None`` every component ``(M, N)`` evolves along its own
    gradient ``G^{QP} w_P``; otherwise ``direction`` is an array ``(n, D)`` or
    a callable returning one, shared by all components.
    """
    pts = as_points(points, stackF.dim)
    metricF = stackF.metric()
    connF = HolonomicConnection(stackF, metricF)
    w = CurvatureDivergence(CurvatureTensor(connF), metricF, connF).jet(pts, 0).value  # (n, M, N, Q)
    metricG = stackG.metric()
    G = metricG.g_jet(pts, 0).value
    ginv = metricG.ginv_jet(pts, 0).value
    if direction is None:
        v = np.einsum("zqp,zmnp->zmnq", ginv, w)
    else:
        d = direction(pts) if callable(direction) else np.asarray(direction, dtype=float)
        v = np.broadcast_to(np.atleast_2d(d)[:, None, None, :], w.shape)
    norm = np.linalg.norm(v, axis=-1)
    degenerate = norm < ZERO_DIRECTION
    if direction is not None and degenerate.any():
        raise ContractViolation("evolution direction vanishes")
    safe = np.where(degenerate[..., None], 1.0, v / np.where(degenerate, 1.0, norm)[..., None])
    lowered = np.einsum("zqh,zmnh->zmnq", G, safe)
    g00 = np.einsum("zmnq,zmnq->zmn", lowered, safe)
    eps_bar = lowered / g00[..., None]
    rho = np.einsum("zmnq,zmnq->zmn", w, safe)
    residual = w - rho[..., None] * eps_bar
    residual[degenerate] = 0.0
    closure = np.abs(np.einsum("zmnq,zmnq->zmn", safe, eps_bar) - 1.0)
    return YangMillsReport(residual, float(closure.max()), int(degenerate.sum()))


# -- covariance checks -----------------------------------------------------------
def verify_curvature_covariance(conn: ConnectionField, transformation, points) -> float:
    """Max residual of the applicable tensorial law for the curvature of ``conn``.

    A :class:`FrameField` transformation needs a gauge connection: the
    curvature of the transformed stack is compared with ``C_k K B_k``.  A
    :class:`CoordinateMap` (old x as functions of new y, ``points`` in y) rebuilds
    the connection in the new chart and compares with ``c K b b b``.
    """
    if isinstance(transformation, FrameField):
        if not isinstance(conn, GaugeConnection):
            raise ContractViolation("the frame law applies to gauge connections")
        pts = as_points(points, conn.dim)
        lhs = CurvatureTensor(GaugeConnection(apply_frame_transformation(transformation, conn.stack)))
        rhs = CurvatureTensor(conn).frame_transformed(transformation)
        return float(np.abs(lhs.jet(pts, 0).value - rhs.jet(pts, 0).value).max())
    if isinstance(transformation, CoordinateMap):
        ys = as_points(points, conn.dim)
        rebuilt = CurvatureTensor(conn.pulled_back(transformation)).jet(ys, 0).value
        K = CurvatureTensor(conn).jet(transformation.forward(ys), 0).value
        b = transformation.jacobian.jet(ys, 0).value
        c = np.linalg.inv(b)
        law = np.einsum("zkm,zmnpq,znj,zpl,zqr->zkjlr", c, K, b, b, b, optimize=True)
        return float(np.abs(rebuilt - law).max())
    raise ContractViolation(f"unsupported transformation {type(transformation).__name__}")
