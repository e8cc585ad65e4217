"""Weak-electromagnetic sector (D = 5, internal pair ``a = D-1``, ``b = D``)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..connections import ConnectionField, HolonomicConnection, LoweredConnection
from ..curvature import CurvatureTensor, LoweredCurvature
from ..fields import TensorField, as_points
from ..frames import MetricField, ReferenceSystemStack
from .common import (GaugeDecomposition, LineReport, SectorConfig, apply_weights, chiral, evaluate_lines,
                     line)


def _pair_indices(D: int, lepton_block: str = "top") -> tuple[int, int]:
    """1-based lepton pair: ``(D-1, D)`` at D=5, ``(D-4, D-3)`` in the unified sector."""
    return (D - 4, D - 3) if lepton_block == "unified" else (D - 1, D)


def weak_potential_weights(D: int, block: str = "top") -> dict[str, np.ndarray]:
    """``Z, A, W1, W2`` (geometry of the evolution)."""
    a, b = _pair_indices(D, block)
    Z, A = chiral(D, (a, a), (b, b))
    W1, W2 = chiral(D, (a, b), (b, a))
    return {"Z": Z, "A": A, "W1": W1, "W2": W2}


def field_potential_weights(D: int, block: str = "top") -> dict[str, np.ndarray]:
    """``B, A1, A2, A3`` (geometry of the field)."""
    a, b = _pair_indices(D, block)
    B, A3 = chiral(D, (b, b), (a, a))
    A1, A2 = chiral(D, (a, b), (b, a))
    return {"B": B, "A1": A1, "A2": A2, "A3": A3}


def strength_weights(D: int, block: str = "top") -> dict[str, np.ndarray]:
    """``B_PQ, F1, F2, F3`` from the lowered curvature."""
    a, b = _pair_indices(D, block)
    B, F3 = chiral(D, (b, b), (a, a))
    F1, F2 = chiral(D, (a, b), (b, a))
    return {"B": B, "F1": F1, "F2": F2, "F3": F3}


def lepton_weights(D: int, block: str = "top") -> dict[str, np.ndarray]:
    """``l = (rho_aa, rho_bb)``, ``nu = (rho_ba, rho_ab)`` and their chiral splits."""
    a, b = _pair_indices(D, block)
    lL, lR = chiral(D, (a, a), (b, b))
    nL, nR = chiral(D, (b, a), (a, b))
    return {"l_L": lL, "l_R": lR, "nu_L": nL, "nu_R": nR}


LEPTON_LINES = (
    line("l_L", ("g", -1.0, "l_L", "Z"), ("g", -1.0, "l_R", "A"), ("g", -1.0, "nu_L", "W1")),
    line("l_R", ("g", -1.0, "l_R", "Z"), ("g", -1.0, "l_L", "A")),
    line("nu_L", ("g", -1.0, "nu_L", "Z"), ("g", -1.0, "l_L", "W1")),
    line("nu_R", ("g", -1.0, "nu_R", "Z")),
)


def decompose_weak_em(gamma_lower: np.ndarray, curvature_lower: np.ndarray | None = None,
                      rho: np.ndarray | None = None, block: str = "top") -> GaugeDecomposition:
    """Named combinations from lowered ``Gamma_mnP`` ``(n, D, D, D)``.

    Optional lowered curvature ``(n, D, D, D, D)`` adds the field strengths,
    optional ``rho_mn`` ``(n, D, D)`` adds the lepton charges.
    """
    gamma_lower = np.asarray(gamma_lower, dtype=float)
    if gamma_lower.ndim == 3:
        gamma_lower = gamma_lower[None]
    D = gamma_lower.shape[-1]
    out = GaugeDecomposition("weak_em")
    out.potentials.update(apply_weights(weak_potential_weights(D, block), gamma_lower))
    out.potentials.update(apply_weights(field_potential_weights(D, block), gamma_lower))
    if curvature_lower is not None:
        kl = np.asarray(curvature_lower, dtype=float)
        out.strengths.update(apply_weights(strength_weights(D, block), kl if kl.ndim == 5 else kl[None]))
    if rho is not None:
        r = np.asarray(rho, dtype=float)
        out.charges.update(apply_weights(lepton_weights(D, block), r if r.ndim == 3 else r[None]))
    return out


@dataclass
class FieldStrengthReport:
    residual: dict[str, float]
    max_strength: float
    npoints: int

    @property
    def max_residual(self) -> float:
        return max(self.residual.values())


def _curl(d: np.ndarray) -> np.ndarray:
    """``d_P A_Q - d_Q A_P`` from ``d[z, Q, P] = d_P A_Q``."""
    return np.swapaxes(d, -1, -2) - d


def _wedge(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.einsum("zp,zq->zpq", x, y) - np.einsum("zp,zq->zpq", y, x)


def verify_weak_em_field_strengths(stack: ReferenceSystemStack, points, cfg: SectorConfig | None = None,
                                   metric: MetricField | None = None) -> FieldStrengthReport:
    """Residuals of the four field-strength identities of the field geometry.

    Left side: chiral combinations of the lowered curvature of the
    holonomic connection.  Right side: curls of the lowered potentials
    (exact AD derivatives) plus the ``g`` wedge terms.
    """
    cfg = cfg or SectorConfig("weak_em")
    pts = as_points(points, stack.dim)
    metric = metric or stack.metric()
    conn = HolonomicConnection(stack, metric)
    gj = LoweredConnection(conn, metric).jet(pts, 1)
    kl = LoweredCurvature(CurvatureTensor(conn), metric).jet(pts, 0).value
    D = stack.dim
    pw = field_potential_weights(D)
    pot = apply_weights(pw, gj.value)
    dpot = apply_weights(pw, gj.grad().value)  # [z, Q, P] = d_P A_Q
    F = apply_weights(strength_weights(D), kl)
    g = cfg.couplings(metric.ginv_jet(pts, 0).value)["g"][:, None, None]
    rhs = {
        "B": _curl(dpot["B"]),
        "F3": _curl(dpot["A3"]) + g * _wedge(pot["A1"], pot["A2"]),
        "F1": _curl(dpot["A1"]) + g * _wedge(pot["A2"], pot["A3"]),
        "F2": _curl(dpot["A2"]) + g * _wedge(pot["A1"], pot["A3"]),
    }
    residual = {k: float(np.abs(F[k] - rhs[k]).max()) for k in rhs}
    strength = max(float(np.abs(F[k]).max()) for k in F)
    return FieldStrengthReport(residual, strength, pts.shape[0])


def symmetry_residual(conn: ConnectionField, metric: MetricField, points, block: str = "top") -> float:
    """``max |Gamma_abP - Gamma_baP|`` over the lepton pair."""
    pts = as_points(points, conn.dim)
    gl = LoweredConnection(conn, metric).jet(pts, 0).value
    a, b = (i - 1 for i in _pair_indices(conn.dim, block))
    return float(np.abs(gl[:, a, b] - gl[:, b, a]).max())


def lepton_evolution_residual(conn: ConnectionField, metric: MetricField, rho: TensorField, points,
                              cfg: SectorConfig | None = None, tol: float = 1e-8) -> LineReport:
    """Both-sides residuals of the four lepton evolution lines.

    Skipped (with the measured asymmetry) when ``Gamma_abP = Gamma_baP``
    fails beyond ``tol``.
    """
    cfg = cfg or SectorConfig("weak_em")
    asym = symmetry_residual(conn, metric, points)
    if asym > tol:
        return LineReport({}, {}, skipped=f"symmetry condition violated: max |Gamma_ab - Gamma_ba| = {asym:.3e}")
    D = conn.dim
    return evaluate_lines(LEPTON_LINES, lepton_weights(D), rho, conn, metric, weak_potential_weights(D), cfg,
                          points)
