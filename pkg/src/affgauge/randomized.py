"""Seeded random smooth objects for randomized checks (expression-tree backed)."""

from __future__ import annotations

import numpy as np

from . import expr as ex
from .fields import LOWER, UPPER, CoordinateMap, ExprField
from .frames import FrameField, ReferenceSystemStack


def random_smooth(rng: np.random.Generator, dim: int, terms: int = 2, amplitude: float = 0.5,
                  support: int = 2) -> ex.Expr:
    """``a0 + sum_t a_t sin(w_t . x + phi_t)`` with each ``w_t`` on ``support`` coordinates."""
    parts = [ex.const(rng.uniform(-amplitude, amplitude))]
    for _ in range(terms):
        coords = rng.choice(dim, size=min(support, dim), replace=False)
        arg = ex.add(*[ex.mul(rng.uniform(-1.5, 1.5), ex.var(int(i) + 1)) for i in coords],
                     rng.uniform(-np.pi, np.pi))
        parts.append(ex.mul(rng.uniform(-amplitude, amplitude), ex.sin(arg)))
    return ex.add(*parts)


def _wave(rng: np.random.Generator, dim: int, amplitude: float) -> ex.Expr:
    """One smooth bump ``a0 + a sin(w . x + phi)``."""
    return random_smooth(rng, dim, terms=1, amplitude=amplitude)


def random_coordinate_map(dim: int, rng: np.random.Generator, amplitude: float = 0.08) -> CoordinateMap:
    """``x = y + small smooth bumps``; the Jacobian stays within a few ``amplitude`` of the identity."""
    comps = [ex.add(ex.var(m + 1), _wave(rng, dim, amplitude)) for m in range(dim)]
    return CoordinateMap(comps, dim)


def random_frame_exprs(dim: int, rng: np.random.Generator, amplitude: float = 0.15) -> np.ndarray:
    rows = np.empty((dim, dim), dtype=object)
    for a in range(dim):
        for m in range(dim):
            rows[a, m] = ex.add(1.0 if a == m else 0.0, random_smooth(rng, dim, amplitude=amplitude))
    return rows


def random_frame(dim: int, rng: np.random.Generator, amplitude: float = 0.15, label: str = "") -> FrameField:
    """Position-dependent near-identity frame."""
    return FrameField.from_exprs(random_frame_exprs(dim, rng, amplitude), label=label)


def random_constant_frame(dim: int, rng: np.random.Generator, spread: float = 0.3) -> FrameField:
    m = np.eye(dim) + rng.uniform(-spread, spread, (dim, dim))
    return FrameField.constant(m)


def random_stack(dim: int, rng: np.random.Generator, inner: bool = False, amplitude: float = 0.15
                 ) -> ReferenceSystemStack:
    outer = random_frame(dim, rng, amplitude, "outer")
    inner_frame = random_frame(dim, rng, amplitude, "inner").as_inner() if inner else None
    return ReferenceSystemStack(outer, inner_frame)


def random_metric_exprs(dim: int, rng: np.random.Generator, amplitude: float = 0.2, diagonal: bool = False
                        ) -> np.ndarray:
    """Positive diagonal ``1.5 + a sin(..)`` entries (plus small symmetric off-diagonals unless ``diagonal``)."""
    g = np.empty((dim, dim), dtype=object)
    for m in range(dim):
        for n in range(dim):
            if m == n:
                g[m, n] = ex.add(1.5, random_smooth(rng, dim, amplitude=amplitude))
            elif m < n:
                g[m, n] = ex.ZERO if diagonal else random_smooth(rng, dim, amplitude=0.1)
            else:
                g[m, n] = g[n, m]
    return g


def random_charge(dim: int, rng: np.random.Generator, rank: int = 2, amplitude: float = 1.0) -> ExprField:
    if rank == 0:
        return ExprField.scalar(ex.add(ex.var(1), random_smooth(rng, dim, amplitude=amplitude)), dim)
    comps = np.empty((dim, dim), dtype=object)
    for m in range(dim):
        for n in range(dim):
            comps[m, n] = random_smooth(rng, dim, amplitude=amplitude)
    return ExprField(comps, dim, (LOWER, LOWER))


def random_connection_field(dim: int, rng: np.random.Generator, amplitude: float = 0.3) -> ExprField:
    up = np.empty((dim, dim, dim), dtype=object)
    for i in np.ndindex(up.shape):
        up[i] = random_smooth(rng, dim, amplitude=amplitude)
    return ExprField(up, dim, (UPPER, LOWER, LOWER))
