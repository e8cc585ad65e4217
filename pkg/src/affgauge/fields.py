"""Points, tensor fields and the differentiation front end.

Every field answers ``jet(points, order)``: a :class:`Jet` whose value shape
is ``(D,) * rank``.  Fields built from expression trees also answer
``at(X)`` for an arbitrary point jet ``X``, which is what makes coordinate
pull-backs exact.  Callback fields fall back to central differences.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import expr as ex
from .errors import ContractViolation, EvaluationError
from .jet import Jet, inverse, jeinsum

UPPER, LOWER, FRAME = "u", "d", "f"
DEFAULT_AD_TOL = 1e-8
DEFAULT_FD_TOL = 1e-5
DEFAULT_FD_STEP = 1e-5


@dataclass(frozen=True)
class SpaceSignature:
    """Total dimension D and external dimension r (default 3)."""

    total_dim: int
    external_dim: int = 3

    def __post_init__(self):
        if self.total_dim < 1:
            raise ContractViolation("total_dim must be >= 1")
        if not 0 <= self.external_dim <= self.total_dim:
            raise ContractViolation("need 0 <= external_dim <= total_dim")

    @property
    def external(self) -> tuple[int, ...]:
        """1-based external indices 1..r."""
        return tuple(range(1, self.external_dim + 1))

    @property
    def internal(self) -> tuple[int, ...]:
        """1-based internal indices r+1..D."""
        return tuple(range(self.external_dim + 1, self.total_dim + 1))


@dataclass(frozen=True)
class Point:
    coords: tuple[float, ...]

    def __post_init__(self):
        arr = np.asarray(self.coords, dtype=float)
        if arr.ndim != 1 or not np.all(np.isfinite(arr)):
            raise ContractViolation("a point needs a finite 1-D coordinate array")
        object.__setattr__(self, "coords", tuple(float(c) for c in arr))

    @property
    def dim(self) -> int:
        return len(self.coords)

    def array(self) -> np.ndarray:
        return np.array(self.coords)


def as_points(p, dim: int) -> np.ndarray:
    """Normalize a Point, 1-D or 2-D array to shape ``(n, dim)``."""
    if isinstance(p, Point):
        p = p.coords
    arr = np.atleast_2d(np.asarray(p, dtype=float))
    if arr.shape[-1] != dim:
        raise ContractViolation(f"expected {dim} coordinates, got {arr.shape[-1]}")
    return arr


@dataclass(frozen=True)
class JetEvaluator:
    """Differentiation mode for :func:`partial_derivative` and friends."""

    mode: str = "ad"
    fd_step: float = DEFAULT_FD_STEP

    def __post_init__(self):
        if self.mode not in ("ad", "fd"):
            raise ContractViolation(f"unknown mode {self.mode!r}")
        if not self.fd_step > 0:
            raise ContractViolation("fd_step must be positive")

    @property
    def tolerance(self) -> float:
        return DEFAULT_AD_TOL if self.mode == "ad" else DEFAULT_FD_TOL


AD = JetEvaluator("ad")
FD = JetEvaluator("fd")


class TensorField:
    """Base class: a rank-``len(variance)`` field on a D-dimensional chart."""

    dim: int
    variance: tuple[str, ...]

    @property
    def rank(self) -> int:
        return len(self.variance)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.dim,) * self.rank

    def jet(self, points: np.ndarray, order: int) -> Jet:
        raise NotImplementedError

    def at(self, point: Jet) -> Jet:
        raise NotImplementedError(f"{type(self).__name__} cannot be composed with a coordinate map")

    @property
    def composable(self) -> bool:
        return False

    def values(self, points) -> np.ndarray:
        pts = as_points(points, self.dim)
        return self.jet(pts, 0).value

    def __call__(self, p) -> np.ndarray:
        """Components at a single point (shape ``(D,)*rank``)."""
        return self.values(p)[0]


class ExprField(TensorField):
    """Field whose components are expression trees."""

    def __init__(self, exprs, dim: int, variance: Sequence[str]):
        arr = np.empty(np.shape(exprs), dtype=object) if np.ndim(exprs) else np.empty((), dtype=object)
        flat = np.asarray(exprs, dtype=object).reshape(-1) if np.ndim(exprs) else [exprs]
        cells = arr.reshape(-1)
        for i, e in enumerate(flat):
            cells[i] = ex.lift(e)
        self.exprs = arr
        self.dim = dim
        self.variance = tuple(variance)
        if arr.shape != (dim,) * len(self.variance):
            raise ContractViolation(f"expression array shape {arr.shape} does not match rank {len(self.variance)} in D={dim}")
        if max((e.max_index() for e in cells), default=-1) >= dim:
            raise ContractViolation(f"expression uses a coordinate beyond x{dim}")

    @classmethod
    def scalar(cls, e, dim: int) -> "ExprField":
        return cls(ex.lift(e), dim, ())

    @classmethod
    def constant(cls, values, variance: Sequence[str]) -> "ExprField":
        values = np.asarray(values, dtype=float)
        dim = values.shape[0] if values.ndim else 1
        exprs = np.vectorize(ex.const, otypes=[object])(values)
        return cls(exprs, dim, variance)

    @property
    def composable(self) -> bool:
        return True

    def at(self, point: Jet) -> Jet:
        n, order, dim = point.npoints, point.order, point.dim
        shape = self.exprs.shape
        coeffs = [np.zeros((n,) + shape + (dim,) * j) for j in range(order + 1)]
        memo: dict = {}
        for idx in np.ndindex(*shape) if shape else [()]:
            e = self.exprs[idx]
            if e.is_const:
                if e.value != 0.0:
                    coeffs[0][(slice(None),) + idx] = e.value
                continue
            if e not in memo:
                memo[e] = e.at(point)
            val = memo[e]
            if not isinstance(val, Jet):
                coeffs[0][(slice(None),) + idx] = val
                continue
            for j in range(order + 1):
                coeffs[j][(slice(None),) + idx] = val.coeffs[j]
        return Jet(coeffs, dim)

    def jet(self, points, order: int) -> Jet:
        return self.at(Jet.variable(as_points(points, self.dim), order))

    def sexprs(self):
        """Nested lists of s-expression strings (for reports and configs)."""
        return np.vectorize(ex.to_sexpr, otypes=[object])(self.exprs).tolist()


class CallableField(TensorField):
    """Black-box field ``fn(points (n, D)) -> (n, *shape)``; derivatives by central differences."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], dim: int, variance: Sequence[str],
                 fd_step: float = DEFAULT_FD_STEP):
        self.fn = fn
        self.dim = dim
        self.variance = tuple(variance)
        self.fd_step = fd_step

    def _eval(self, pts: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(pts), dtype=float).reshape((pts.shape[0],) + self.shape)

    def jet(self, points, order: int) -> Jet:
        pts = as_points(points, self.dim)
        h = self.fd_step
        coeffs = [self._eval(pts)]
        for j in range(1, order + 1):
            # nested central differences over every multi-index
            out = np.zeros(coeffs[0].shape + (self.dim,) * j)
            for multi in itertools.product(range(self.dim), repeat=j):
                acc = 0.0
                for signs in itertools.product((1.0, -1.0), repeat=j):
                    shift = np.zeros(self.dim)
                    for s, m in zip(signs, multi):
                        shift[m] += s * h
                    acc = acc + np.prod(signs) * self._eval(pts + shift)
                out[(Ellipsis,) + multi] = acc / (2 * h) ** j
            coeffs.append(out)
        return Jet(coeffs, self.dim)


class JetFunctionField(TensorField):
    """Wraps a function that returns jets directly (derived quantities)."""

    def __init__(self, fn: Callable[[np.ndarray, int], Jet], dim: int, variance: Sequence[str]):
        self.fn = fn
        self.dim = dim
        self.variance = tuple(variance)

    def jet(self, points, order: int) -> Jet:
        return self.fn(as_points(points, self.dim), order)


class RelabeledField(TensorField):
    """Same components as ``base`` with a different variance declaration."""

    def __init__(self, base: TensorField, variance: Sequence[str]):
        if len(variance) != base.rank:
            raise ContractViolation("relabeling must keep the rank")
        self.base = base
        self.dim = base.dim
        self.variance = tuple(variance)

    @property
    def composable(self) -> bool:
        return self.base.composable

    def at(self, point: Jet) -> Jet:
        return self.base.at(point)

    def jet(self, points, order: int) -> Jet:
        return self.base.jet(points, order)


class CoordinateMap:
    """Closed-form map from new coordinates y to old coordinates x = phi(y)."""

    def __init__(self, components: Sequence, dim: int | None = None):
        comps = [ex.lift(c) for c in components]
        self.dim = dim or len(comps)
        self.phi = ExprField(np.array(comps, dtype=object), self.dim, (UPPER,))
        jac = np.empty((self.dim, self.dim), dtype=object)
        for m in range(self.dim):
            for k in range(self.dim):
                jac[m, k] = ex.diff(comps[m], k)
        self.jacobian = ExprField(jac, self.dim, (UPPER, LOWER))

    @classmethod
    def identity(cls, dim: int) -> "CoordinateMap":
        return cls([ex.var(i + 1) for i in range(dim)])

    @classmethod
    def linear(cls, matrix, offset=None) -> "CoordinateMap":
        matrix = np.asarray(matrix, dtype=float)
        dim = matrix.shape[0]
        offset = np.zeros(dim) if offset is None else np.asarray(offset, dtype=float)
        comps = [ex.add(*[ex.mul(matrix[m, k], ex.var(k + 1)) for k in range(dim)], offset[m]) for m in range(dim)]
        return cls(comps, dim)

    def forward(self, points) -> np.ndarray:
        return self.phi.values(points)

    def pullback(self, f: TensorField) -> "PulledBackField":
        return PulledBackField(f, self)


class PulledBackField(TensorField):
    """Tensor field re-expressed in the chart y of a :class:`CoordinateMap`.

    Lower coordinate slots pick up ``b = dx/dy``, upper slots ``c = dy/dx``;
    frame slots are left alone.
    """

    def __init__(self, base: TensorField, cmap: CoordinateMap):
        if not base.composable:
            raise ContractViolation("pull-back needs a closed-form (expression) field")
        self.base = base
        self.cmap = cmap
        self.dim = cmap.dim
        self.variance = base.variance

    @property
    def composable(self) -> bool:
        return True

    def at(self, point: Jet) -> Jet:
        val = self.base.at(self.cmap.phi.at(point))
        if all(v == FRAME for v in self.variance):
            return val
        b = self.cmap.jacobian.at(point)
        c = inverse(b) if UPPER in self.variance else None
        letters = "abcdefgh"[: self.rank]
        for slot, kind in enumerate(self.variance):
            if kind == FRAME:
                continue
            new = letters[:slot] + "y" + letters[slot + 1:]
            if kind == LOWER:
                val = jeinsum(f"{letters},{letters[slot]}y->{new}", val, b)
            else:
                val = jeinsum(f"{letters},y{letters[slot]}->{new}", val, c)
        return val

    def jet(self, points, order: int) -> Jet:
        return self.at(Jet.variable(as_points(points, self.dim), order))


def _check_finite(arr: np.ndarray, what: str, points: np.ndarray) -> np.ndarray:
    bad = ~np.isfinite(arr)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise EvaluationError(f"non-finite {what} at component {idx[1:]}", component=idx[1:],
                              point=points[idx[0]])
    return arr


def evaluate_field(f: TensorField, p) -> np.ndarray:
    """Components of ``f`` at one point (shape ``(D,)*rank``)."""
    pts = as_points(p, f.dim)
    if pts.shape[0] != 1:
        raise ContractViolation("evaluate_field takes a single point")
    return _check_finite(f.values(pts), "value", pts)[0]


def partial_derivative(f: TensorField, p, direction: int, evaluator: JetEvaluator = AD) -> np.ndarray:
    """d(components)/dx^direction at ``p``; ``direction`` is 1-based."""
    if not 1 <= direction <= f.dim:
        raise ContractViolation(f"direction must be in 1..{f.dim}")
    pts = as_points(p, f.dim)
    if evaluator.mode == "ad":
        out = f.jet(pts, 1).coeffs[1][..., direction - 1]
    else:
        e = np.zeros(f.dim)
        e[direction - 1] = evaluator.fd_step
        out = (f.values(pts + e) - f.values(pts - e)) / (2 * evaluator.fd_step)
    return _check_finite(out, "derivative", pts)[0]


class LieBracket(TensorField):
    """[X, Y]^M = X^P d_P Y^M - Y^P d_P X^M as a differentiable field."""

    def __init__(self, x: TensorField, y: TensorField):
        if x.variance != (UPPER,) or y.variance != (UPPER,):
            raise ContractViolation("lie bracket takes two upper-index vector fields")
        self.x, self.y = x, y
        self.dim = x.dim
        self.variance = (UPPER,)

    def jet(self, points, order: int) -> Jet:
        jx = self.x.jet(points, order + 1)
        jy = self.y.jet(points, order + 1)
        return (jeinsum("p,mp->m", jx.truncate(order), jy.grad())
                - jeinsum("p,mp->m", jy.truncate(order), jx.grad()))


def lie_bracket(x: TensorField, y: TensorField, p, evaluator: JetEvaluator = AD) -> np.ndarray:
    if evaluator.mode == "ad":
        return evaluate_field(LieBracket(x, y), p)
    xs, ys = evaluate_field(x, p), evaluate_field(y, p)
    dx = np.stack([partial_derivative(x, p, k + 1, evaluator) for k in range(x.dim)], axis=-1)
    dy = np.stack([partial_derivative(y, p, k + 1, evaluator) for k in range(x.dim)], axis=-1)
    return dy @ xs - dx @ ys


def sample_points(dim: int, count: int, seed: int, low: float = -1.0, high: float = 1.0) -> np.ndarray:
    """Seeded uniform samples in the box [low, high]^dim."""
    rng = np.random.default_rng(seed)
    return rng.uniform(low, high, size=(count, dim))


def box_corners(dim: int, low: float = -1.0, high: float = 1.0, limit: int = 64) -> np.ndarray:
    corners = np.array(list(itertools.islice(itertools.product((low, high), repeat=dim), limit)))
    return corners
