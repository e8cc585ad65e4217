"""Unified sector (D = 8): lepton pair ``(4, 5)`` plus colour block ``(6, 7, 8)``.

Indices below are absolute and 1-based; the sector fixes D = 8.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..connections import ConnectionField, LoweredConnection
from ..fields import TensorField, as_points
from ..frames import MetricField
from .common import SQRT2, LineReport, SectorConfig, evaluate_lines, line, pair
from .strong import colour_potential_weights, quark_pairs, quark_weights
from .weak_em import lepton_weights, weak_potential_weights

L1, L2 = 4, 5
COLOUR = (6, 7, 8)
D8 = 8


def _i(k: int) -> int:
    return k - 1


# -- condition blocks -------------------------------------------------------------
@dataclass
class ConditionResult:
    residual: float
    vacuous: bool = False
    detail: dict = field(default_factory=dict)

    def holds(self, tol: float) -> bool:
        return self.residual <= tol


def _fit(target: np.ndarray, ref: np.ndarray, floor: float = 1e-12) -> tuple[float | None, float]:
    """Least-squares ``c`` with ``target ~ c * ref``; ``None`` when ``ref`` vanishes."""
    den = float(np.sum(ref * ref))
    if den < floor:
        return None, float(np.abs(target).max())
    c = float(np.sum(target * ref) / den)
    return c, float(np.abs(target - c * ref).max())


def _proportional(target: np.ndarray, ref: np.ndarray, c: float | None) -> tuple[float, bool, float | None]:
    if c is None:
        fitted, res = _fit(target, ref)
        return res, fitted is None, fitted
    return float(np.abs(target - c * ref).max()), False, c


def check_unified_conditions(cfg: SectorConfig, gamma_upper: np.ndarray, ginv: np.ndarray,
                             rho: np.ndarray | None = None, use_constants: bool = True) -> dict[int, ConditionResult]:
    """Residual per toggled condition block (all six when none are toggled).

    ``gamma_upper`` is ``(n, D, D, D)``, ``ginv`` ``(n, D, D)`` and ``rho``
    ``(n, D, D)``.  With ``use_constants=False`` the proportionality
    constants are fitted by least squares; a block whose reference
    coefficient vanishes at every sample is reported vacuous.
    """
    G = np.asarray(gamma_upper, dtype=float)
    lo = np.einsum("zmh,zhnp->zmnp", np.linalg.inv(ginv), G)
    blocks = cfg.conditions or (1, 2, 3, 4, 5, 6)
    out: dict[int, ConditionResult] = {}
    for b in blocks:
        if b == 1:
            out[1] = ConditionResult(cfg.metric_residual(ginv))
        elif b == 2:
            sym = np.abs(lo[:, _i(5), _i(4)] - lo[:, _i(4), _i(5)]).max()
            tr = np.abs(sum(lo[:, _i(k), _i(k)] for k in COLOUR)).max()
            out[2] = ConditionResult(float(max(sym, tr)), detail={"symmetry": float(sym), "trace": float(tr)})
        elif b in (3, 5):
            res, vac, consts = 0.0, True, {}
            for k in COLOUR:
                if b == 3:
                    specs = [(G[:, _i(k), _i(4)], G[:, _i(5), _i(4)], f"c{k}_5"),
                             (G[:, _i(k), _i(5)], G[:, _i(4), _i(5)], f"c{k}_4")]
                else:
                    specs = [(G[:, _i(5), _i(k)], G[:, _i(5), _i(4)], f"c4_{k}"),
                             (G[:, _i(4), _i(k)], G[:, _i(4), _i(5)], f"c5_{k}")]
                for target, ref, key in specs:
                    c = cfg.mixing.get(key) if use_constants else None
                    r, v, used = _proportional(target, ref, c)
                    res, vac = max(res, r), vac and v
                    consts[key] = used
            tie = _constant_ties(consts, b)
            out[b] = ConditionResult(max(res, tie), vacuous=vac, detail={"constants": consts, "tie": tie})
        elif b in (4, 6):
            if rho is None:
                out[b] = ConditionResult(0.0, vacuous=True, detail={"reason": "no charge field"})
                continue
            r = np.asarray(rho, dtype=float)
            if b == 4:
                diffs = [r[:, _i(k), _i(5)] - r[:, _i(k), _i(4)] for k in COLOUR]
                diffs += [r[:, _i(5), _i(k)] - r[:, _i(4), _i(k)] for k in COLOUR]
            else:
                diffs = []
                for j in (4, 5):
                    diffs += [r[:, _i(k), _i(j)] - r[:, _i(6), _i(j)] for k in (7, 8)]
                    diffs += [r[:, _i(j), _i(k)] - r[:, _i(j), _i(6)] for k in (7, 8)]
            out[b] = ConditionResult(float(max(np.abs(d).max() for d in diffs)))
    return out


def _constant_ties(consts: dict[str, float | None], block: int) -> float:
    """Equalities among the constants themselves (``c^k_5 = c^k_4`` or equal across colours)."""
    vals = {k: v for k, v in consts.items() if v is not None}
    worst = 0.0
    if block == 3:
        for k in COLOUR:
            a, b = vals.get(f"c{k}_5"), vals.get(f"c{k}_4")
            if a is not None and b is not None:
                worst = max(worst, abs(a - b))
    else:
        for up in (4, 5):
            group = [vals[f"c{up}_{k}"] for k in COLOUR if f"c{up}_{k}" in vals]
            if group:
                worst = max(worst, max(group) - min(group))
    return worst


# -- PMNS --------------------------------------------------------------------------
def pmns_weights(cfg: SectorConfig) -> dict[str, np.ndarray]:
    """Lepton chiral charges plus the primed ``l'_L`` and ``nu'_L``."""
    w = lepton_weights(D8, "unified")
    c = cfg.c

    def primed(diag: tuple[int, int], lower: int, cup: int) -> np.ndarray:
        entries = [(1.0, *diag)]
        for k in COLOUR:
            entries += [(c(k, cup) / 2, k, lower), (c(k, cup) / 2, lower, k)]
        return pair(D8, *entries)

    l1 = primed((4, 4), 4, 4)
    l2 = primed((5, 5), 5, 5)
    n1 = primed((5, 4), 4, 5)
    n2 = primed((4, 5), 5, 4)
    w["l'_L"] = (l1 + l2) / SQRT2
    w["nu'_L"] = (n1 + n2) / SQRT2
    w["l'_1"], w["l'_2"], w["nu'_1"], w["nu'_2"] = l1, l2, n1, n2
    return w


PMNS_LINES = (
    line("l_L", ("g", -1.0, "l_L", "Z"), ("g", -1.0, "l_R", "A"), ("g", -1.0, "nu'_L", "W1")),
    line("l_R", ("g", -1.0, "l_R", "Z"), ("g", -1.0, "l_L", "A")),
    line("nu_L", ("g", -1.0, "nu_L", "Z"), ("g", -1.0, "l'_L", "W1")),
    line("nu_R", ("g", -1.0, "nu_R", "Z")),
)


def unified_potential_weights() -> dict[str, np.ndarray]:
    w = weak_potential_weights(D8, "unified")
    w.update(colour_potential_weights(D8))
    return w


def _gate(cfg: SectorConfig, conn: ConnectionField, metric: MetricField, rho: TensorField, points,
          blocks: tuple[int, ...], tol: float) -> str | None:
    pts = as_points(points, D8)
    gup = conn.jet(pts, 0).value
    ginv = metric.ginv_jet(pts, 0).value
    probe = SectorConfig("unified", conditions=blocks, mixing=cfg.mixing, rst=cfg.rst)
    report = check_unified_conditions(probe, gup, ginv, rho.jet(pts, 0).value)
    bad = {b: r.residual for b, r in report.items() if not r.holds(tol)}
    if bad:
        return "condition blocks violated: " + ", ".join(f"({b}) {v:.3e}" for b, v in sorted(bad.items()))
    return None


def pmns_mixing_residual(cfg: SectorConfig, conn: ConnectionField, metric: MetricField, rho: TensorField,
                         points, tol: float = 1e-8) -> LineReport:
    """Lepton lines with primed partners; needs blocks (1)(2)(3)(4)."""
    why = _gate(cfg, conn, metric, rho, points, (1, 2, 3, 4), tol)
    if why:
        return LineReport({}, {}, skipped=why)
    return evaluate_lines(PMNS_LINES, pmns_weights(cfg), rho, conn, metric, unified_potential_weights(), cfg, points)


# -- CKM ----------------------------------------------------------------------------
_S = 1.0 / (2.0 * SQRT2)


def _sym(coef: float, i: int, j: int) -> list[tuple[float, int, int]]:
    return [(coef * _S, i, j), (coef * _S, j, i)]


def ckm_weights(cfg: SectorConfig) -> dict[str, np.ndarray]:
    """Quark chiral charges plus the primed ``d'_iL`` and ``u'_iL``."""
    w = quark_weights(D8)
    c = cfg.c
    table = {
        "d'1L": [(c(5, 7), 4, 6), (c(5, 6), 4, 7), (c(4, 7), 5, 6), (c(4, 6), 5, 7)],
        "d'2L": [(c(5, 8), 4, 7), (c(5, 7), 4, 8), (c(4, 8), 5, 7), (c(4, 7), 5, 8)],
        "d'3L": [(c(5, 6), 4, 8), (c(5, 8), 4, 6), (c(4, 6), 5, 8), (c(4, 8), 5, 6)],
        "u'1L": [(c(5, 6), 4, 6), (c(4, 6), 5, 6), (c(5, 7), 4, 7), (c(4, 7), 5, 7)],
        "u'2L": [(c(5, 7), 4, 7), (c(4, 7), 5, 7), (c(5, 8), 4, 8), (c(4, 8), 5, 8)],
        "u'3L": [(c(5, 8), 4, 8), (c(4, 8), 5, 8), (c(5, 6), 4, 6), (c(4, 6), 5, 6)],
    }
    for name, items in table.items():
        entries = []
        for coef, i, j in items:
            entries += _sym(coef, i, j)
        w[name] = pair(D8, *entries)
    return w


def _q(*terms):
    """Terms as ``(coef, coupling, charge, potential)`` shorthand."""
    return tuple((cp, coef, ch, pot) for coef, cp, ch, pot in terms)


H = 0.5
CKM_LINES = (
    line("d1L", *_q((-1, "gs", "d1L", "U1"), (1, "gs", "d2L", "V1"), (-1, "gs", "d3L", "V1"),
                    (-1, "gs", "u1L", "X23"), (-H, "gs", "u2L", "X31"), (H, "gs", "u2L", "Y31"),
                    (-H, "gs", "u3L", "X12"), (-H, "gs", "u3L", "Y12"), (-1, "g", "u'1L", "W1"))),
    line("d2L", *_q((-1, "gs", "d2L", "U2"), (1, "gs", "d3L", "V2"), (-1, "gs", "d1L", "V2"),
                    (-1, "gs", "u2L", "X31"), (-H, "gs", "u3L", "X12"), (H, "gs", "u3L", "Y12"),
                    (-H, "gs", "u1L", "X23"), (-H, "gs", "u1L", "Y23"), (-1, "g", "u'2L", "W1"))),
    line("d3L", *_q((-1, "gs", "d3L", "U3"), (1, "gs", "d1L", "V3"), (-1, "gs", "d2L", "V3"),
                    (-1, "gs", "u3L", "X12"), (-H, "gs", "u1L", "X23"), (H, "gs", "u1L", "Y23"),
                    (-H, "gs", "u2L", "X31"), (-H, "gs", "u2L", "Y31"), (-1, "g", "u'3L", "W1"))),
    line("d1R", *_q((-1, "gs", "d1L", "V1"), (1, "gs", "d2L", "U1"), (-1, "gs", "d3L", "U1"),
                    (1, "gs", "u1L", "Y23"), (H, "gs", "u2L", "X31"), (-H, "gs", "u2L", "Y31"),
                    (-H, "gs", "u3L", "X12"), (-H, "gs", "u3L", "Y12"))),
    line("d2R", *_q((-1, "gs", "d2L", "V2"), (1, "gs", "d3L", "U2"), (-1, "gs", "d1L", "U2"),
                    (1, "gs", "u2L", "Y31"), (H, "gs", "u3L", "X12"), (-H, "gs", "u3L", "Y12"),
                    (-H, "gs", "u1L", "X23"), (-H, "gs", "u1L", "Y23"))),
    line("d3R", *_q((-1, "gs", "d3L", "V3"), (1, "gs", "d1L", "U3"), (-1, "gs", "d2L", "U3"),
                    (1, "gs", "u3L", "Y12"), (H, "gs", "u1L", "X23"), (-H, "gs", "u1L", "Y23"),
                    (-H, "gs", "u2L", "X31"), (-H, "gs", "u2L", "Y31"))),
    line("u1L", *_q((-1, "gs", "u1L", "U1"), (-H, "gs", "u2L", "X12"), (-H, "gs", "u2L", "Y12"),
                    (-H, "gs", "u3L", "X31"), (H, "gs", "u3L", "Y31"), (-1, "gs", "d1L", "X23"),
                    (1, "gs", "d2L", "Y23"), (-1, "gs", "d3L", "Y23"), (-1, "g", "d'1L", "W1"))),
    line("u2L", *_q((-1, "gs", "u2L", "U2"), (-H, "gs", "u3L", "X23"), (-H, "gs", "u3L", "Y23"),
                    (-H, "gs", "u1L", "X12"), (H, "gs", "u1L", "Y12"), (-1, "gs", "d2L", "X31"),
                    (1, "gs", "d3L", "Y31"), (-1, "gs", "d1L", "Y31"), (-1, "g", "d'2L", "W1"))),
    line("u3L", *_q((-1, "gs", "u3L", "U3"), (-H, "gs", "u1L", "X31"), (-H, "gs", "u1L", "Y31"),
                    (-H, "gs", "u2L", "X23"), (H, "gs", "u2L", "Y23"), (-1, "gs", "d3L", "X12"),
                    (1, "gs", "d1L", "Y12"), (-1, "gs", "d2L", "Y12"), (-1, "g", "d'3L", "W1"))),
    line("u1R", *_q((-1, "gs", "u1R", "U1"), (H, "gs", "u2R", "X12"), (H, "gs", "u2R", "Y12"),
                    (H, "gs", "u3R", "X31"), (-H, "gs", "u3R", "Y31"))),
    line("u2R", *_q((-1, "gs", "u2R", "U2"), (H, "gs", "u3R", "X23"), (H, "gs", "u3R", "Y23"),
                    (H, "gs", "u1R", "X12"), (-H, "gs", "u1R", "Y12"))),
    line("u3R", *_q((-1, "gs", "u3R", "U3"), (H, "gs", "u1R", "X31"), (H, "gs", "u1R", "Y31"),
                    (H, "gs", "u2R", "X23"), (-H, "gs", "u2R", "Y23"))),
)


def ckm_mixing_residual(cfg: SectorConfig, conn: ConnectionField, metric: MetricField, rho: TensorField,
                        points, tol: float = 1e-8) -> LineReport:
    """Twelve quark lines; needs blocks (1)(2)(5)(6)."""
    why = _gate(cfg, conn, metric, rho, points, (1, 2, 5, 6), tol)
    if why:
        return LineReport({}, {}, skipped=why)
    return evaluate_lines(CKM_LINES, ckm_weights(cfg), rho, conn, metric, unified_potential_weights(), cfg, points)


# -- classification -----------------------------------------------------------------
LEPTON_RHO = [(m, n) for m in COLOUR for n in COLOUR]


@dataclass
class Classification:
    kind: str                          # lepton_field | hadron_field | individual_quark_candidate
    nonzero: tuple[str, ...] = ()
    confinement_excluded: bool = False
    inconsistent: bool = False
    derived: dict = field(default_factory=dict)


def quark_charges(rho: np.ndarray) -> dict[str, np.ndarray]:
    """``d_i``/``u_i`` as 2-vectors from a single ``(D, D)`` charge matrix."""
    rho = np.asarray(rho, dtype=float)
    return {k: np.array([rho[_i(x[0]), _i(x[1])], rho[_i(y[0]), _i(y[1])]])
            for k, (x, y) in quark_pairs(D8).items()}


def classify_charges(q: dict[str, np.ndarray], tol: float = 0.0) -> Classification:
    """Classify from the six colour charges given as 2-vectors.

    Down-type exclusion: two vanishing ``d`` charges force all three
    diagonal colour entries to vanish, hence the third ``d`` as well.
    Input that still lists the third as nonzero is flagged inconsistent.
    """
    nz = tuple(k for k in ("d1", "d2", "d3", "u1", "u2", "u3") if np.abs(q[k]).max() > tol)
    derived: dict = {}
    d_zero = [k for k in ("d1", "d2", "d3") if k not in nz]
    if len(d_zero) >= 2:
        # each d_i pairs two of the three diagonal entries; two of them cover all three
        derived["diagonal"] = np.zeros(3)
        remaining = ({"d1", "d2", "d3"} - set(d_zero[:2])).pop()
        derived[remaining] = np.zeros(2)
    inconsistent = any(k in derived for k in nz)
    if len(nz) == 1:
        return Classification("individual_quark_candidate", nz, confinement_excluded=nz[0].startswith("d"),
                              inconsistent=inconsistent, derived=derived)
    return Classification("hadron_field", nz, inconsistent=inconsistent, derived=derived)


def classify_field(rho: np.ndarray, gamma_lower: np.ndarray, tol: float = 0.0) -> Classification:
    """Lepton / hadron / individual-quark classification at one point.

    ``rho`` is ``(D, D)`` and ``gamma_lower`` ``(D, D, D)`` (all ``P``).
    """
    rho = np.asarray(rho, dtype=float)
    g = np.asarray(gamma_lower, dtype=float)
    r_colour = max(abs(rho[_i(m), _i(n)]) for m, n in LEPTON_RHO)
    g_colour = max(float(np.abs(g[_i(m), _i(n)]).max()) for m, n in LEPTON_RHO)
    if r_colour <= tol and g_colour <= tol:
        return Classification("lepton_field")
    return classify_charges(quark_charges(rho), tol)
