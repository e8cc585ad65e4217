"""Strong sector: colour block ``(D-2, D-1, D)`` with D = 6 (or 8 inside the unified sector)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError
from .common import SQRT2, GaugeDecomposition, SectorConfig, apply_weights, chiral

SQRT3 = float(np.sqrt(3.0))
SQRT6 = float(np.sqrt(6.0))


def colour_indices(D: int) -> tuple[int, int, int]:
    return (D - 2, D - 1, D)


def colour_potential_weights(D: int) -> dict[str, np.ndarray]:
    p, q, r = colour_indices(D)
    w = {}
    w["U1"], w["V1"] = chiral(D, (p, p), (q, q))
    w["U2"], w["V2"] = chiral(D, (q, q), (r, r))
    w["U3"], w["V3"] = chiral(D, (r, r), (p, p))
    w["X23"], w["Y23"] = chiral(D, (p, q), (q, p))
    w["X31"], w["Y31"] = chiral(D, (q, r), (r, q))
    w["X12"], w["Y12"] = chiral(D, (r, p), (p, r))
    return w


def quark_pairs(D: int) -> dict[str, tuple[tuple[int, int], tuple[int, int]]]:
    """Entry pairs of the six colour charges (1-based absolute indices)."""
    p, q, r = colour_indices(D)
    return {
        "d1": ((p, p), (q, q)), "d2": ((q, q), (r, r)), "d3": ((r, r), (p, p)),
        "u1": ((p, q), (q, p)), "u2": ((q, r), (r, q)), "u3": ((r, p), (p, r)),
    }


def quark_weights(D: int) -> dict[str, np.ndarray]:
    w = {}
    for name, (x, y) in quark_pairs(D).items():
        w[f"{name}L"], w[f"{name}R"] = chiral(D, x, y)
    return w


def rst_from_u(u: np.ndarray, rst: np.ndarray) -> np.ndarray:
    """``(R, S, T) = M (U1, U2, U3)`` along axis 1."""
    return np.einsum("ij,zj...->zi...", rst, u)


def u_from_rst(v: np.ndarray, rst: np.ndarray) -> np.ndarray:
    return np.einsum("ij,zj...->zi...", np.linalg.inv(rst), v)


def decompose_strong(gamma_lower: np.ndarray, cfg: SectorConfig | None = None,
                     rho: np.ndarray | None = None) -> GaugeDecomposition:
    """U/V/X/Y potentials, R/S/T from the configured matrix, optional colour charges."""
    gamma_lower = np.asarray(gamma_lower, dtype=float)
    if gamma_lower.ndim == 3:
        gamma_lower = gamma_lower[None]
    D = gamma_lower.shape[-1]
    cfg = cfg or SectorConfig("strong")
    if abs(np.linalg.det(cfg.rst)) < 1e-12:
        raise ConfigurationError("R/S/T coefficient matrix is singular")
    out = GaugeDecomposition(cfg.sector)
    out.potentials.update(apply_weights(colour_potential_weights(D), gamma_lower))
    u = np.stack([out.potentials[f"U{i}"] for i in (1, 2, 3)], axis=1)
    r, s, t = np.moveaxis(rst_from_u(u, cfg.rst), 1, 0)
    out.potentials.update(R=r, S=s, T=t)
    if rho is not None:
        r = np.asarray(rho, dtype=float)
        out.charges.update(apply_weights(quark_weights(D), r if r.ndim == 3 else r[None]))
    return out


def trace_residual(gamma_lower: np.ndarray) -> float:
    """``max |Gamma_ppP + Gamma_qqP + Gamma_rrP|`` over the colour block."""
    g = np.asarray(gamma_lower, dtype=float)
    D = g.shape[-1]
    idx = [i - 1 for i in colour_indices(D)]
    return float(np.abs(sum(g[..., i, i, :] for i in idx)).max())


# -- Gell-Mann assembly --------------------------------------------------------------
def gell_mann() -> np.ndarray:
    """The eight Gell-Mann matrices, shape ``(8, 3, 3)``."""
    lam = np.zeros((8, 3, 3), dtype=complex)
    lam[0][0, 1] = lam[0][1, 0] = 1
    lam[1][0, 1], lam[1][1, 0] = -1j, 1j
    lam[2][0, 0], lam[2][1, 1] = 1, -1
    lam[3][0, 2] = lam[3][2, 0] = 1
    lam[4][0, 2], lam[4][2, 0] = -1j, 1j
    lam[5][1, 2] = lam[5][2, 1] = 1
    lam[6][1, 2], lam[6][2, 1] = -1j, 1j
    lam[7] = np.diag([1, 1, -2]) / SQRT3
    return lam


GENERATORS = gell_mann() / 2.0
ASSIGNMENT = ("X12", "Y12", "S", "X31", "Y31", "X23", "Y23", "T")


def assemble_gluon_matrix(dec: GaugeDecomposition) -> np.ndarray:
    """``A_P`` as ``(n, D, 3, 3)`` complex from the potential table."""
    P = dec.potentials
    S, T = P["S"], P["T"]
    X12, Y12, X31, Y31, X23, Y23 = (P[k] for k in ("X12", "Y12", "X31", "Y31", "X23", "Y23"))
    A = np.empty(S.shape + (3, 3), dtype=complex)
    A[..., 0, 0] = S + T / SQRT6
    A[..., 0, 1] = X12 - 1j * Y12
    A[..., 0, 2] = X31 - 1j * Y31
    A[..., 1, 0] = X12 + 1j * Y12
    A[..., 1, 1] = -S + T / SQRT6
    A[..., 1, 2] = X23 - 1j * Y23
    A[..., 2, 0] = X31 + 1j * Y31
    A[..., 2, 1] = X23 + 1j * Y23
    A[..., 2, 2] = -2.0 * T / SQRT6
    return A / 2.0


def components(dec: GaugeDecomposition, corrected: bool = False) -> np.ndarray:
    """``(A^1 .. A^8)`` as ``(n, D, 8)``.

    ``corrected=False`` uses the assignment table literally (``A^8 = T``);
    ``corrected=True`` uses ``A^8 = T / sqrt2``, the value that the matrix
    entries ``T/sqrt6`` actually carry against ``lambda_8``.
    """
    vals = [dec.potentials[k] for k in ASSIGNMENT]
    if corrected:
        vals[-1] = vals[-1] / SQRT2
    return np.stack(vals, axis=-1)


def from_components(a: np.ndarray) -> np.ndarray:
    """``T_a A^a``."""
    return np.einsum("...a,aij->...ij", a, GENERATORS)


def to_components(A: np.ndarray) -> np.ndarray:
    """Inverse of :func:`from_components` for traceless Hermitian ``A`` (``A^a = 2 tr(T_a A)``)."""
    return 2.0 * np.einsum("aji,...ij->...a", GENERATORS, A).real


@dataclass
class GluonReport:
    literal: float              # max |A_P - T_a A^a_P| with the table as stated
    corrected: float            # same with A^8 = T/sqrt2
    per_component: np.ndarray   # literal: max |A^a(table) - A^a(extracted from matrix)|
    trace: float
    skipped: str | None = None


def gluon_check(dec: GaugeDecomposition, gamma_lower: np.ndarray, tol: float = 1e-8) -> GluonReport:
    tr = trace_residual(gamma_lower)
    if tr > tol:
        return GluonReport(np.nan, np.nan, np.full(8, np.nan), tr, skipped=f"tracelessness violated: {tr:.3e}")
    A = assemble_gluon_matrix(dec)
    lit = components(dec)
    cor = components(dec, corrected=True)
    extracted = to_components(A)
    return GluonReport(
        literal=float(np.abs(A - from_components(lit)).max()),
        corrected=float(np.abs(A - from_components(cor)).max()),
        per_component=np.abs(lit - extracted).reshape(-1, 8).max(axis=0),
        trace=tr,
    )
