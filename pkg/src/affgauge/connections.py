"""Simple, gauge, Christoffel and holonomic connections plus covariant derivatives.

Coefficient arrays are indexed ``gamma[M, N, P]``: upper index first, the
derivative direction last.  Every connection is a :class:`TensorField`, so its
jets can be differentiated again (curvature needs one order, divergences two).
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ContractViolation
from .fields import (FRAME, LOWER, UPPER, CoordinateMap, TensorField, as_points, evaluate_field)
from .frames import FrameField, MetricField, ReferenceSystemStack, apply_frame_transformation
from .jet import Jet, inverse, jeinsum

KINDS = ("simple", "gauge", "christoffel", "holonomic", "explicit")


class ConnectionField(TensorField):
    """Coefficients ``gamma[M, N, P]`` as a field."""

    kind: str = ""
    provenance: str = ""

    def __init__(self, dim: int):
        self.dim = dim
        self.variance = (UPPER, LOWER, LOWER)

    def coeffs(self, p) -> np.ndarray:
        return evaluate_field(self, p)

    def pulled_back(self, cmap: CoordinateMap) -> "ConnectionField":
        """The same construction carried out on pulled-back ingredients."""
        raise ContractViolation(f"{self.kind} connection cannot be rebuilt in a new chart")

    def frame_transformed(self, k: FrameField) -> "ConnectionField":
        return FrameTransformedConnection(self, k)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(kind={self.kind!r}, dim={self.dim}, provenance={self.provenance!r})"


def _simple_from_jets(bi: Jet, ci: Jet, chart_c: Jet) -> Jet:
    """Symmetrized inner-layer coefficients ``S[A, B, C]`` from jets.

    ``bi`` (order k+1) is the inner frame over x, ``ci`` its inverse (order k),
    ``chart_c`` the chart inverse frame ``c[M, C]`` (order k).
    """
    dxi = jeinsum("xbm,mc->xbc", bi.grad(), chart_c)
    sym = dxi + dxi.transpose(0, 2, 1)
    return jeinsum("ax,xbc->abc", ci, sym).scale(0.5)


class SimpleConnection(ConnectionField):
    """Torsion-free coefficients of an inner layer, on the inner chart ``xi``.

    Derivatives along ``xi^C`` are taken by the chain rule through the chart
    frame: ``d/dxi^C = c^M_C d/dx^M``.
    """

    kind = "simple"

    def __init__(self, inner: FrameField, chart: FrameField):
        super().__init__(inner.dim)
        self.inner = inner
        self.chart = chart
        self.variance = (FRAME, FRAME, FRAME)
        self.provenance = f"inner={inner.label}"

    def jet(self, points, order: int) -> Jet:
        pts = as_points(points, self.dim)
        bi, ci = self.inner.jets(pts, order + 1)
        return _simple_from_jets(bi, ci.truncate(order), self.chart.c_jet(pts, order))


def simple_connection(inner: FrameField, p, chart: FrameField | None = None) -> np.ndarray:
    """``S[A, B, C]`` at ``p``; ``chart`` defaults to the identity (xi = x)."""
    chart = chart if chart is not None else FrameField.identity(inner.dim)
    return evaluate_field(SimpleConnection(inner, chart), p)


class GaugeConnection(ConnectionField):
    """``C d_P B + C S_P B`` of a reference-system stack."""

    kind = "gauge"

    def __init__(self, stack: ReferenceSystemStack):
        super().__init__(stack.dim)
        self.stack = stack
        self.provenance = f"stack={stack.label}"

    def jet(self, points, order: int) -> Jet:
        pts = as_points(points, self.dim)
        b, c = self.stack.outer.jets(pts, order + 1)
        b0, c0 = b.truncate(order), c.truncate(order)
        out = jeinsum("ma,anp->mnp", c0, b.grad())
        if self.stack.inner is not None:
            bi, ci = self.stack.inner.jets(pts, order + 1)
            bc, cc = self.stack.chart_frame.jets(pts, order)
            s = _simple_from_jets(bi, ci.truncate(order), cc)
            s_p = jeinsum("abc,cp->abp", s, bc)
            out = out + jeinsum("mbp,bn->mnp", jeinsum("ma,abp->mbp", c0, s_p), b0)
        return out

    def pulled_back(self, cmap: CoordinateMap) -> "GaugeConnection":
        return GaugeConnection(self.stack.with_pullback(cmap))


def gauge_connection(stack: ReferenceSystemStack, p) -> np.ndarray:
    return evaluate_field(GaugeConnection(stack), p)


class ChristoffelConnection(ConnectionField):
    """Levi-Civita symbols of a metric."""

    kind = "christoffel"

    def __init__(self, metric: MetricField, label: str = ""):
        super().__init__(metric.dim)
        self.metric = metric
        self.provenance = f"metric={label}"

    def jet(self, points, order: int) -> Jet:
        pts = as_points(points, self.dim)
        dg = self.metric.g_jet(pts, order + 1).grad()  # dg[N, Q, P] = d_P G_NQ
        ginv = self.metric.ginv_jet(pts, order)
        lowered = dg + dg.transpose(2, 1, 0) - dg.transpose(0, 2, 1)
        return jeinsum("mq,nqp->mnp", ginv, lowered).scale(0.5)

    def pulled_back(self, cmap: CoordinateMap) -> "ChristoffelConnection":
        return ChristoffelConnection(self.metric.pullback(cmap), self.provenance)


def christoffel(metric: MetricField, p) -> np.ndarray:
    return evaluate_field(ChristoffelConnection(metric), p)


class HolonomicConnection(ConnectionField):
    """Average of the gauge connection and the Christoffel symbols of the stack metric."""

    kind = "holonomic"

    def __init__(self, stack: ReferenceSystemStack, metric: MetricField | None = None):
        super().__init__(stack.dim)
        self.stack = stack
        self.metric = metric if metric is not None else stack.metric()
        self.gauge = GaugeConnection(stack)
        self.levi_civita = ChristoffelConnection(self.metric)
        self.provenance = f"stack={stack.label}"

    def jet(self, points, order: int) -> Jet:
        pts = as_points(points, self.dim)
        return (self.gauge.jet(pts, order) + self.levi_civita.jet(pts, order)).scale(0.5)

    def pulled_back(self, cmap: CoordinateMap) -> "HolonomicConnection":
        return HolonomicConnection(self.stack.with_pullback(cmap), self.metric.pullback(cmap))


def holonomic_connection(stack: ReferenceSystemStack, p, metric: MetricField | None = None) -> np.ndarray:
    return evaluate_field(HolonomicConnection(stack, metric), p)


class ExplicitConnection(ConnectionField):
    """Coefficients given directly as a rank-3 field (used for constructed sector scenarios)."""

    kind = "explicit"

    def __init__(self, field: TensorField, label: str = ""):
        if field.rank != 3:
            raise ContractViolation("connection coefficients are rank 3")
        super().__init__(field.dim)
        self.field = field
        self.provenance = label

    def jet(self, points, order: int) -> Jet:
        return self.field.jet(as_points(points, self.dim), order)


class ZeroConnection(ConnectionField):
    kind = "explicit"
    provenance = "zero"

    def jet(self, points, order: int) -> Jet:
        pts = as_points(points, self.dim)
        return Jet.constant(np.zeros((self.dim,) * 3), pts.shape[0], self.dim, order)

    def pulled_back(self, cmap: CoordinateMap) -> "ConnectionField":
        raise ContractViolation("the zero connection is chart dependent")


class FrameTransformedConnection(ConnectionField):
    """``C_k gamma B_k + C_k d_P B_k`` with the derivative slot kept on the old chart."""

    def __init__(self, base: ConnectionField, k: FrameField):
        super().__init__(base.dim)
        self.base = base
        self.k = k
        self.kind = base.kind
        self.provenance = f"{base.provenance}|frame={k.label}"

    def jet(self, points, order: int) -> Jet:
        pts = as_points(points, self.dim)
        bk, ck = self.k.jets(pts, order + 1)
        gamma = self.base.jet(pts, order)
        ck0 = ck.truncate(order)
        out = jeinsum("mh,hnp->mnp", ck0, jeinsum("hqp,qn->hnp", gamma, bk.truncate(order)))
        return out + jeinsum("mh,hnp->mnp", ck0, bk.grad())


def lower_connection(conn: ConnectionField, metric: MetricField, p) -> np.ndarray:
    """``gamma_MNP = G_MH gamma^H_NP`` at ``p``."""
    return evaluate_field(LoweredConnection(conn, metric), p)


class LoweredConnection(TensorField):
    def __init__(self, conn: ConnectionField, metric: MetricField):
        self.conn, self.metric = conn, metric
        self.dim = conn.dim
        self.variance = (LOWER, LOWER, LOWER)

    def jet(self, points, order: int) -> Jet:
        pts = as_points(points, self.dim)
        return jeinsum("mh,hnp->mnp", self.metric.g_jet(pts, order), self.conn.jet(pts, order))


# -- covariant differentiation ------------------------------------------------
_SLOT = "abcdefgh"


def covariant_jet(t: Jet, variance: Sequence[str], gamma: Jet) -> Jet:
    """Covariant derivative of a tensor jet; the new derivative slot is last.

    ``t`` must be one order higher than ``gamma``.  Upper slots gain
    ``+gamma[m, h, p] t[..h..]``, lower slots ``-gamma[h, n, p] t[..h..]``;
    frame slots are inert.
    """
    order = gamma.order
    out = t.grad()
    if out.order > order:
        out = out.truncate(order)
    t0 = t.truncate(order)
    rank = len(variance)
    letters = _SLOT[:rank]
    for slot, kind in enumerate(variance):
        if kind == FRAME:
            continue
        target = letters + "p"
        source = letters[:slot] + "h" + letters[slot + 1:]
        if kind == UPPER:
            out = out + jeinsum(f"{letters[slot]}hp,{source}->{target}", gamma, t0)
        else:
            out = out - jeinsum(f"h{letters[slot]}p,{source}->{target}", gamma, t0)
    return out


class CovariantDerivativeField(TensorField):
    """``T_{...;P}`` as a field of rank ``rank(T) + 1``."""

    def __init__(self, field: TensorField, conn: ConnectionField):
        if field.dim != conn.dim:
            raise ContractViolation("field and connection dimensions differ")
        self.field, self.conn = field, conn
        self.dim = field.dim
        self.variance = tuple(field.variance) + (LOWER,)

    def jet(self, points, order: int) -> Jet:
        pts = as_points(points, self.dim)
        return covariant_jet(self.field.jet(pts, order + 1), self.field.variance, self.conn.jet(pts, order))


def covariant_derivative(field: TensorField, conn: ConnectionField, p, direction: int | None = None) -> np.ndarray:
    """Covariant derivative at ``p``; all directions (last axis) or one 1-based direction."""
    full = evaluate_field(CovariantDerivativeField(field, conn), p)
    if direction is None:
        return full
    if not 1 <= direction <= field.dim:
        raise ContractViolation(f"direction must be in 1..{field.dim}")
    return full[..., direction - 1]


# -- transformation laws -----------------------------------------------------
def transform_coefficients(gamma_old: np.ndarray, b: np.ndarray, db: np.ndarray) -> np.ndarray:
    """Affine law ``c gamma b b + c db`` for batches.

    ``gamma_old`` (n, D, D, D) at the old points, ``b[n, M, K] = dx^M/dy^K``,
    ``db[n, M, N, P] = d b^M_N / dy^P``.
    """
    c = np.linalg.inv(b)
    tensorial = np.einsum("zkm,zmnp,znj,zpl->zkjl", c, gamma_old, b, b, optimize=True)
    return tensorial + np.einsum("zkm,zmnp->zknp", c, db)


def verify_coordinate_transformation_law(conn: ConnectionField, cmap: CoordinateMap, points) -> float:
    """Max residual between the connection rebuilt in the new chart and the affine law.

    ``cmap`` gives old coordinates as functions of new ones, x = phi(y);
    ``points`` are new-chart points y.
    """
    ys = as_points(points, conn.dim)
    rebuilt = conn.pulled_back(cmap).jet(ys, 0).value
    xs = cmap.forward(ys)
    jac = cmap.jacobian.jet(ys, 1)
    law = transform_coefficients(conn.jet(xs, 0).value, jac.value, jac.coeffs[1])
    return float(np.abs(rebuilt - law).max())


def verify_frame_transformation_law(stack: ReferenceSystemStack, k: FrameField, points) -> float:
    """Max residual of the gauge connection of the transformed stack against the frame law."""
    pts = as_points(points, stack.dim)
    lhs = GaugeConnection(apply_frame_transformation(k, stack)).jet(pts, 0).value
    rhs = GaugeConnection(stack).frame_transformed(k).jet(pts, 0).value
    return float(np.abs(lhs - rhs).max())
