"""Shared machinery for the sector decompositions.

Every named potential or charge is a fixed linear functional of the
internal ``(m, n)`` block of ``Gamma_mnP`` or ``rho_mn``.  Each functional is
stored as a ``(D, D)`` weight matrix, so one weight set serves values,
partial derivatives and covariant derivatives alike.  Evolution laws are
lists of :class:`Term` s; residuals compare the covariant derivative of a
charge with ``d_P charge + sum(coef * coupling * charge * potential_P)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..connections import ConnectionField, CovariantDerivativeField, LoweredConnection
from ..errors import ConfigurationError, ContractViolation
from ..fields import TensorField, as_points
from ..frames import MetricField

SQRT2 = float(np.sqrt(2.0))
SECTOR_DIMS = {"weak_em": 5, "strong": 6, "unified": 8}
DEFAULT_MIXING = 0.25


class SectorConstraintError(ContractViolation):
    """A constructed frame breaks one of the sector's metric conditions."""

    def __init__(self, message: str, condition: str):
        super().__init__(f"{condition}: {message}")
        self.condition = condition


def rel(D: int, k: int) -> int:
    """0-based array index of the 1-based index ``D - k``."""
    return D - k - 1


def default_mixing() -> dict[str, float]:
    """Small distinct rationals for every ``c^m_n`` used by the unified sector.

    Keys read ``"c<upper>_<lower>"`` with absolute 1-based indices at D=8.
    Constants tied together by a condition block share one value.
    """
    c = {}
    for k, v in zip((6, 7, 8), (0.25, 0.125, 0.375)):
        c[f"c{k}_4"] = v
        c[f"c{k}_5"] = v
    for k in (6, 7, 8):
        c[f"c4_{k}"] = 0.25
        c[f"c5_{k}"] = 0.125
    return c


@dataclass
class SectorConfig:
    sector: str
    external_dim: int = 3
    conditions: tuple[int, ...] = ()
    mixing: dict[str, float] = field(default_factory=default_mixing)
    rst: np.ndarray = field(default_factory=lambda: np.eye(3))
    tol: float = 1e-8

    def __post_init__(self):
        if self.sector not in SECTOR_DIMS:
            raise ConfigurationError(f"unknown sector {self.sector!r}")
        if self.external_dim != 3:
            raise ConfigurationError("sector configurations use r = 3")
        self.rst = np.asarray(self.rst, dtype=float)
        if self.rst.shape != (3, 3):
            raise ConfigurationError("R/S/T coefficient matrix must be 3x3")
        if abs(np.linalg.det(self.rst)) < 1e-12:
            raise ConfigurationError("R/S/T coefficient matrix is singular")
        bad = [c for c in self.conditions if c not in range(1, 7)]
        if bad:
            raise ConfigurationError(f"unknown condition blocks {bad}")

    @property
    def dim(self) -> int:
        return SECTOR_DIMS[self.sector]

    def c(self, upper: int, lower: int) -> float:
        return float(self.mixing.get(f"c{upper}_{lower}", 0.0))

    def metric_equalities(self) -> list[tuple[int, ...]]:
        """Groups of 1-based internal indices whose ``G^{mm}`` must agree."""
        D = self.dim
        if self.sector == "weak_em":
            return [(D - 1, D)]
        if self.sector == "strong":
            return [(D - 2, D - 1, D)]
        return [(D - 4, D - 3), (D - 2, D - 1, D)]

    def couplings(self, ginv: np.ndarray) -> dict[str, np.ndarray]:
        """``g`` and ``g_s`` from diagonal entries of ``G^{-1}`` (batched)."""
        D = self.dim
        diag = np.diagonal(ginv, axis1=-2, axis2=-1)
        if self.sector == "unified":
            a, b = rel(D, 4), rel(D, 3)
            out = {"g": np.hypot(diag[..., a], diag[..., b])}
        else:
            out = {"g": np.hypot(diag[..., rel(D, 1)], diag[..., rel(D, 0)])}
        if self.sector != "weak_em":
            out["gs"] = np.hypot(diag[..., rel(D, 1)], diag[..., rel(D, 0)])
        return out

    def metric_residual(self, ginv: np.ndarray) -> float:
        diag = np.diagonal(ginv, axis1=-2, axis2=-1)
        worst = 0.0
        for group in self.metric_equalities():
            vals = diag[..., [i - 1 for i in group]]
            worst = max(worst, float(np.abs(vals - vals[..., :1]).max()))
        return worst


# -- linear functionals ----------------------------------------------------------
def pair(D: int, *entries: tuple[float, int, int]) -> np.ndarray:
    """Weight matrix from ``(coef, m, n)`` with 1-based absolute indices."""
    w = np.zeros((D, D))
    for coef, m, n in entries:
        w[m - 1, n - 1] += coef
    return w


def chiral(D: int, first: tuple[int, int], second: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """``(x + y)/sqrt2`` and ``(x - y)/sqrt2`` of two entries."""
    s = 1.0 / SQRT2
    return (pair(D, (s, *first), (s, *second)), pair(D, (s, *first), (-s, *second)))


def apply_weights(weights: dict[str, np.ndarray], arr: np.ndarray) -> dict[str, np.ndarray]:
    """Contract each weight matrix with the leading ``(m, n)`` slots after the batch axis."""
    return {k: np.einsum("mn,zmn...->z...", w, arr) for k, w in weights.items()}


def reconstruct_block(weights: dict[str, np.ndarray], values: dict[str, np.ndarray]) -> np.ndarray:
    """Least-squares inverse of :func:`apply_weights` on the span of the weights.

    Returns ``(n, D, D, ...)``; exact whenever the original lay in that span.
    """
    names = list(weights)
    W = np.stack([weights[k].reshape(-1) for k in names])  # (k, D*D)
    V = np.stack([values[k] for k in names], axis=1)        # (n, k, ...)
    D = weights[names[0]].shape[0]
    flat = np.einsum("jk,zk...->zj...", np.linalg.pinv(W), V)
    return flat.reshape((flat.shape[0], D, D) + flat.shape[2:])


@dataclass
class GaugeDecomposition:
    """Named potentials ``(n, D)``, strengths ``(n, D, D)`` and charges ``(n,)``."""

    sector: str
    potentials: dict[str, np.ndarray] = field(default_factory=dict)
    strengths: dict[str, np.ndarray] = field(default_factory=dict)
    charges: dict[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        for table in (self.potentials, self.strengths, self.charges):
            if name in table:
                return table[name]
        raise KeyError(name)


# -- evolution lines -----------------------------------------------------------------
@dataclass(frozen=True)
class Term:
    coupling: str       # "g" or "gs"
    coef: float
    charge: str
    potential: str


@dataclass(frozen=True)
class Line:
    name: str
    charge: str
    terms: tuple[Term, ...]

    def coefficient(self, potential: str) -> float:
        """Total structural coefficient of ``potential`` in this line."""
        return sum(t.coef for t in self.terms if t.potential == potential)


def line(name: str, *terms: tuple) -> Line:
    """``line("l_L", ("g", -1, "l_L", "Z"), ...)``; the charge is the line name."""
    return Line(name, name, tuple(Term(*t) for t in terms))


@dataclass
class LineReport:
    residual: dict[str, float]
    lhs_scale: dict[str, float]
    skipped: str | None = None

    @property
    def max_residual(self) -> float:
        return max(self.residual.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.skipped is None


def evaluate_lines(lines, charge_weights: dict[str, np.ndarray], rho: TensorField,
                   conn: ConnectionField, metric: MetricField, potential_weights: dict[str, np.ndarray],
                   cfg: SectorConfig, points) -> LineReport:
    """Both-sides residuals of each line at ``points``.

    Left: the charge functional applied to ``rho_{mn;P}`` (covariant
    derivative under ``conn``).  Right: the functional applied to
    ``d_P rho_mn`` plus the line's coupling terms, with potentials from the
    lowered coefficients and couplings from ``G^{-1}``.
    """
    pts = as_points(points, rho.dim)
    cov = CovariantDerivativeField(rho, conn).jet(pts, 0).value     # (n, D, D, P)
    rj = rho.jet(pts, 1)
    rho0, drho = rj.value, rj.grad().value                           # (n, D, D), (n, D, D, P)
    gl = LoweredConnection(conn, metric).jet(pts, 0).value
    pots = apply_weights(potential_weights, gl)
    coup = cfg.couplings(metric.ginv_jet(pts, 0).value)
    charges = apply_weights(charge_weights, rho0)
    lhs = apply_weights(charge_weights, cov)
    partial = apply_weights(charge_weights, drho)
    residual, scale = {}, {}
    for ln in lines:
        rhs = partial[ln.charge].copy()
        for t in ln.terms:
            rhs += t.coef * (coup[t.coupling] * charges[t.charge])[:, None] * pots[t.potential]
        residual[ln.name] = float(np.abs(lhs[ln.charge] - rhs).max())
        scale[ln.name] = float(np.abs(lhs[ln.charge]).max())
    return LineReport(residual, scale)
