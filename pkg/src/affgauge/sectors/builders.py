"""Constructive sector scenarios: rotation-generated frames and conforming connections."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import expr as ex
from ..connections import ExplicitConnection
from ..fields import LOWER, UPPER, ExprField, sample_points
from ..frames import FrameField, MetricField, ReferenceSystemStack
from ..randomized import random_smooth
from .common import SECTOR_DIMS, SectorConfig, SectorConstraintError

CHECK_SAMPLES = 24


@dataclass
class Generator:
    """Internal frame block ``scale * R_1 R_2 ...`` of plane rotations.

    ``rotations`` holds ``(i, j, angle)`` with 1-based absolute internal
    indices and angle expressions.  ``matrix`` replaces the rotation product
    by an arbitrary internal block (used to exercise rejection).
    ``inner_rotations`` builds an orthogonal inner layer the same way.
    """

    rotations: list = field(default_factory=list)
    scale: float = 1.0
    matrix: list | None = None
    inner_rotations: list = field(default_factory=list)
    inner_scale: object = 1.0


def _matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    out = np.empty((n, n), dtype=object)
    for i in range(n):
        for j in range(n):
            out[i, j] = ex.add(*[ex.mul(a[i, k], b[k, j]) for k in range(n)
                                 if not (a[i, k].is_const and a[i, k].value == 0.0)
                                 and not (b[k, j].is_const and b[k, j].value == 0.0)])
    return out


def _eye(D: int) -> np.ndarray:
    m = np.empty((D, D), dtype=object)
    for i in range(D):
        for j in range(D):
            m[i, j] = ex.ONE if i == j else ex.ZERO
    return m


def rotation_block(D: int, rotations) -> np.ndarray:
    """Product of plane rotations as an expression matrix (identity elsewhere)."""
    out = _eye(D)
    for i, j, angle in rotations:
        th = ex.lift(angle)
        r = _eye(D)
        a, b = i - 1, j - 1
        r[a, a], r[a, b] = ex.cos(th), ex.neg(ex.sin(th))
        r[b, a], r[b, b] = ex.sin(th), ex.cos(th)
        out = _matmul(out, r)
    return out


def _scaled(D: int, r: int, block: np.ndarray, scale) -> tuple[np.ndarray, np.ndarray]:
    """Frame rows with the internal block scaled, plus the closed-form inverse of a rotation block."""
    s = ex.lift(scale)
    rows, inv = block.copy(), block.T.copy()
    for m in range(r, D):
        for n in range(D):
            rows[m, n] = ex.mul(s, block[m, n])
            inv[n, m] = ex.div(block[m, n], s)
    return rows, inv


def build_sector_frame(cfg: SectorConfig | str, gen: Generator | None = None, tol: float = 1e-9,
                       seed: int = 0) -> ReferenceSystemStack:
    """Stack for a sector from an internal generator, checked at sample points.

    Rejected (``SectorConstraintError`` naming the condition) unless the
    internal metric block is constant and diagonal, the external block is
    the identity with zero cross blocks, and the sector's ``G^{mm}``
    equalities hold.
    """
    cfg = SectorConfig(cfg) if isinstance(cfg, str) else cfg
    gen = gen or Generator()
    D, r = cfg.dim, cfg.external_dim
    for spec in list(gen.rotations) + list(gen.inner_rotations):
        if not (r < spec[0] <= D and r < spec[1] <= D and spec[0] != spec[1]):
            raise SectorConstraintError(f"rotation plane {spec[:2]} is not internal", "internal generator")
    if gen.matrix is not None:
        block = _eye(D)
        m = np.asarray([[ex.lift(e) for e in row] for row in gen.matrix], dtype=object)
        if m.shape != (D - r, D - r):
            raise SectorConstraintError("internal matrix has the wrong shape", "internal generator")
        block[r:, r:] = m
        rows, inv = _scaled(D, r, block, gen.scale)
        outer = FrameField.from_exprs(rows, label=f"{cfg.sector}:outer")
    else:
        rows, inv = _scaled(D, r, rotation_block(D, gen.rotations), gen.scale)
        outer = FrameField.from_exprs(rows, label=f"{cfg.sector}:outer", inverse_rows=inv)
    inner = None
    if gen.inner_rotations or not (ex.lift(gen.inner_scale).is_const and ex.lift(gen.inner_scale).value == 1.0):
        irows, iinv = _scaled(D, r, rotation_block(D, gen.inner_rotations), gen.inner_scale)
        inner = FrameField.from_exprs(irows, label=f"{cfg.sector}:inner", inverse_rows=iinv)
    stack = ReferenceSystemStack(outer, inner, label=cfg.sector)
    check_sector_metric(cfg, stack.metric(), tol, seed)
    return stack


def check_sector_metric(cfg: SectorConfig, metric: MetricField, tol: float = 1e-9, seed: int = 0) -> None:
    D, r = cfg.dim, cfg.external_dim
    pts = sample_points(D, CHECK_SAMPLES, seed)
    gj = metric.g_jet(pts, 1)
    G, dG = gj.value, gj.grad().value
    ext = np.abs(G[:, :r, :r] - np.eye(r)).max() if r else 0.0
    cross = np.abs(G[:, :r, r:]).max() if r else 0.0
    if max(ext, cross) > tol:
        raise SectorConstraintError(f"external block deviates by {max(ext, cross):.3e}", "external identity")
    internal = G[:, r:, r:]
    off = internal - np.einsum("zii->zi", internal)[..., None] * np.eye(D - r)
    if np.abs(off).max() > tol:
        raise SectorConstraintError(f"off-diagonal internal metric {np.abs(off).max():.3e}", "diagonal metric")
    if np.abs(dG[:, r:, r:]).max() > tol:
        raise SectorConstraintError(f"internal metric varies ({np.abs(dG[:, r:, r:]).max():.3e})", "constant metric")
    if cfg.metric_residual(np.linalg.inv(G)) > tol:
        raise SectorConstraintError("internal metric entries differ within a block", "sector metric equalities")


# -- constructive conforming scenarios ------------------------------------------------
@dataclass
class SectorScenario:
    cfg: SectorConfig
    metric: MetricField
    connection: ExplicitConnection
    charge: ExprField
    label: str = ""


def _diag_metric(cfg: SectorConfig, values) -> MetricField:
    return MetricField(ExprField.constant(np.diag(values), (LOWER, LOWER)))


def sector_metric_diagonal(cfg: SectorConfig, rng: np.random.Generator) -> np.ndarray:
    diag = np.ones(cfg.dim)
    for group in cfg.metric_equalities():
        v = rng.uniform(0.5, 2.0)
        for i in group:
            diag[i - 1] = v
    return diag


def conforming_scenario(cfg: SectorConfig | str, seed: int, blocks=None) -> SectorScenario:
    """Explicit connection and charge field satisfying the sector's conditions.

    Upper coefficients ``Gamma^h_mP`` are random smooth expressions for
    internal ``h, m`` and zero otherwise (so ``Gamma^i_NP = 0``).  With the
    metric equalities in place the lowered conditions coincide with the
    upper ones, so each block is imposed by overwriting the constrained
    entries: symmetric lepton pair, traceless colour diagonal, and the
    proportionalities of blocks (3) and (5) with the configured constants.
    The charge is a random internal ``rho_mn`` with blocks (4)/(6) imposed.
    """
    cfg = SectorConfig(cfg) if isinstance(cfg, str) else cfg
    rng = np.random.default_rng(seed)
    D, r = cfg.dim, cfg.external_dim
    if blocks is None:
        blocks = cfg.conditions or {"weak_em": (1, 2), "strong": (1, 2), "unified": (1, 2, 3, 4, 5, 6)}[cfg.sector]
    blocks = set(blocks)
    diag = sector_metric_diagonal(cfg, rng)
    up = np.empty((D, D, D), dtype=object)
    up.fill(ex.ZERO)
    for h in range(r, D):
        for m in range(r, D):
            for p in range(D):
                up[h, m, p] = random_smooth(rng, D)
    rho = np.empty((D, D), dtype=object)
    rho.fill(ex.ZERO)
    for m in range(r, D):
        for n in range(r, D):
            rho[m, n] = random_smooth(rng, D)

    def i(k):
        return k - 1

    if cfg.sector == "weak_em":
        a, b = D - 1, D
        if 2 in blocks:
            up[i(b), i(a)] = up[i(a), i(b)].copy()
    else:
        colour = (D - 2, D - 1, D)
        if 2 in blocks:
            for p in range(D):
                up[i(colour[2]), i(colour[2]), p] = ex.neg(ex.add(up[i(colour[0]), i(colour[0]), p],
                                                                   up[i(colour[1]), i(colour[1]), p]))
            if cfg.sector == "unified":
                up[i(5), i(4)] = up[i(4), i(5)].copy()
    if cfg.sector == "unified":
        c = cfg.c
        for k in (6, 7, 8):
            for p in range(D):
                if 3 in blocks:
                    up[i(k), i(4), p] = ex.mul(c(k, 5), up[i(5), i(4), p])
                    up[i(k), i(5), p] = ex.mul(c(k, 4), up[i(4), i(5), p])
                if 5 in blocks:
                    up[i(5), i(k), p] = ex.mul(c(4, k), up[i(5), i(4), p])
                    up[i(4), i(k), p] = ex.mul(c(5, k), up[i(4), i(5), p])
            if 4 in blocks:
                rho[i(k), i(5)] = rho[i(k), i(4)]
                rho[i(5), i(k)] = rho[i(4), i(k)]
        if 6 in blocks:
            for j in (4, 5):
                for k in (7, 8):
                    rho[i(k), i(j)] = rho[i(6), i(j)]
                    rho[i(j), i(k)] = rho[i(j), i(6)]
    conn = ExplicitConnection(ExprField(up, D, (UPPER, LOWER, LOWER)), label=f"{cfg.sector}:conforming:{seed}")
    return SectorScenario(cfg, _diag_metric(cfg, diag), conn, ExprField(rho, D, (LOWER, LOWER)),
                          label=f"{cfg.sector}:{seed}")


def weak_em_rotation_stack(k: float = 0.7, scale: float = 1.0) -> ReferenceSystemStack:
    """Pure-gauge D=5 example: internal rotation by ``k x1``."""
    return build_sector_frame("weak_em", Generator(rotations=[(4, 5, ex.mul(k, ex.var(1)))], scale=scale))


def weak_em_curved_stack(scale: float = 1.3) -> ReferenceSystemStack:
    """D=5 stack with a position-dependent inner rotation; field strengths are nonzero."""
    outer_angle = ex.parse("(+ (* 0.6 x1) (* 0.4 (sin x2)))")
    inner_angle = ex.parse("(+ (* 0.8 (* x2 x4)) (* 0.5 (cos (+ x1 x5))))")
    return build_sector_frame("weak_em", Generator(rotations=[(4, 5, outer_angle)], scale=scale,
                                                   inner_rotations=[(4, 5, inner_angle)]))


__all__ = ["Generator", "SectorScenario", "build_sector_frame", "check_sector_metric", "conforming_scenario",
           "random_smooth", "rotation_block", "weak_em_curved_stack", "weak_em_rotation_stack", "SECTOR_DIMS"]
