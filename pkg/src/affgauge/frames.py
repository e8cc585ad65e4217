"""Frame fields, metrics, reference-system stacks, transformations and inversions.

Conventions: a frame ``B`` is stored as a matrix ``B[A, M]`` (frame index
first), its inverse as ``C[M, A]``.  Metrics:

* ``G[M, N] = sum_A B[A, M] B[A, N]``
* ``G_inv[M, N] = sum_A C[M, A] C[N, A]``
* ``H[A, B] = sum_M C[M, A] C[M, B]``
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from . import expr as ex
from .errors import ContractViolation, SingularityError
from .fields import (FRAME, LOWER, UPPER, CoordinateMap, ExprField, JetFunctionField, RelabeledField,
                     SpaceSignature, TensorField, as_points, box_corners, sample_points)
from .jet import Jet, inverse, jeinsum

SINGULAR_DET = 1e-12


def _inverse_at(b: Jet, points: np.ndarray) -> Jet:
    try:
        return inverse(b, SINGULAR_DET)
    except SingularityError as err:
        raise SingularityError(f"singular frame at point {points[err.index].tolist()}", err.index,
                               points[err.index]) from None


class FrameField:
    """Matrix field ``B[A, M](x)`` with inverse ``C[M, A](x)``."""

    def __init__(self, B: TensorField, C: TensorField | None = None, label: str = ""):
        if B.rank != 2:
            raise ContractViolation("a frame field is rank 2")
        self.B = B
        self.C = C
        self.label = label
        self.dim = B.dim

    # -- constructors ---------------------------------------------------------
    @classmethod
    def from_exprs(cls, rows, label: str = "", inverse_rows=None) -> "FrameField":
        rows = np.asarray([[ex.lift(e) for e in row] for row in rows], dtype=object)
        dim = rows.shape[0]
        B = ExprField(rows, dim, (FRAME, LOWER))
        C = None
        if inverse_rows is not None:
            inv = np.asarray([[ex.lift(e) for e in row] for row in inverse_rows], dtype=object)
            C = ExprField(inv, dim, (UPPER, FRAME))
        return cls(B, C, label)

    @classmethod
    def constant(cls, matrix, label: str = "") -> "FrameField":
        matrix = np.asarray(matrix, dtype=float)
        if abs(np.linalg.det(matrix)) < SINGULAR_DET:
            raise SingularityError("singular constant frame")
        B = ExprField.constant(matrix, (FRAME, LOWER))
        C = ExprField.constant(np.linalg.inv(matrix), (UPPER, FRAME))
        return cls(B, C, label)

    @classmethod
    def identity(cls, dim: int, label: str = "identity") -> "FrameField":
        return cls.constant(np.eye(dim), label)

    @classmethod
    def from_function(cls, fn, dim: int, label: str = "") -> "FrameField":
        """Frame whose ``B`` jet comes from ``fn(points, order) -> Jet``."""
        return cls(JetFunctionField(fn, dim, (FRAME, LOWER)), None, label)

    # -- evaluation ---------------------------------------------------------
    @property
    def composable(self) -> bool:
        return self.B.composable

    def b_jet(self, points, order: int) -> Jet:
        return self.B.jet(as_points(points, self.dim), order)

    def c_jet(self, points, order: int) -> Jet:
        pts = as_points(points, self.dim)
        if self.C is not None:
            return self.C.jet(pts, order)
        return _inverse_at(self.B.jet(pts, order), pts)

    def jets(self, points, order: int) -> tuple[Jet, Jet]:
        pts = as_points(points, self.dim)
        b = self.B.jet(pts, order)
        c = self.C.jet(pts, order) if self.C is not None else _inverse_at(b, pts)
        return b, c

    def verify_inverse(self, points, tol: float = 1e-10) -> float:
        """Max |C B - I| and |B C - I| at ``points``; raises if above ``tol``."""
        b, c = self.jets(points, 0)
        eye = np.eye(self.dim)
        res = max(np.abs(np.einsum("zma,zan->zmn", c.value, b.value) - eye).max(),
                  np.abs(np.einsum("zam,zmb->zab", b.value, c.value) - eye).max())
        if res > tol:
            raise ContractViolation(f"supplied inverse frame is inconsistent (residual {res:.3e})")
        return float(res)

    @property
    def is_inner(self) -> bool:
        """True when both slots are frame indices (an inner layer over a frame chart)."""
        return self.B.variance == (FRAME, FRAME)

    def as_inner(self) -> "FrameField":
        """Same matrix field, but neither slot transforms under coordinate changes."""
        if self.is_inner:
            return self
        C = RelabeledField(self.C, (FRAME, FRAME)) if self.C is not None else None
        return FrameField(RelabeledField(self.B, (FRAME, FRAME)), C, self.label)

    def pullback(self, cmap: CoordinateMap) -> "FrameField":
        C = cmap.pullback(self.C) if self.C is not None and self.C.composable else None
        return FrameField(cmap.pullback(self.B), C, self.label)

    def __matmul__(self, k: "FrameField") -> "FrameField":
        """Right-multiply by a transformation frame: ``B' = B . B_k``."""
        return compose_frames(self, k)


class MatrixProductField(TensorField):
    """Pointwise matrix product of two rank-2 fields."""

    def __init__(self, left: TensorField, right: TensorField, variance):
        self.left, self.right = left, right
        self.dim = left.dim
        self.variance = tuple(variance)

    @property
    def composable(self) -> bool:
        return self.left.composable and self.right.composable

    def at(self, point: Jet) -> Jet:
        return jeinsum("ab,bc->ac", self.left.at(point), self.right.at(point))

    def jet(self, points, order: int) -> Jet:
        pts = as_points(points, self.dim)
        return jeinsum("ab,bc->ac", self.left.jet(pts, order), self.right.jet(pts, order))


def compose_frames(left: FrameField, right: FrameField, label: str = "") -> FrameField:
    """Frame with ``B = B_left . B_right`` and ``C = C_right . C_left``."""
    if left.dim != right.dim:
        raise ContractViolation("frame dimensions differ")
    B = MatrixProductField(left.B, right.B, (left.B.variance[0], right.B.variance[1]))
    C = None
    if left.C is not None and right.C is not None:
        C = MatrixProductField(right.C, left.C, (right.C.variance[0], left.C.variance[1]))
    else:
        C = JetFunctionField(lambda p, k: jeinsum("ab,bc->ac", right.c_jet(p, k), left.c_jet(p, k)),
                             left.dim, (UPPER, FRAME))
    return FrameField(B, C, label or f"{left.label}*{right.label}")


def invert_frame(B: TensorField) -> TensorField:
    """Pointwise inverse matrix field (singular when |det| < 1e-12)."""

    def fn(points, order):
        return _inverse_at(B.jet(points, order), points)

    return JetFunctionField(fn, B.dim, (UPPER, FRAME))


class MetricField:
    """``G``, ``G_inv`` and (when frame-built) ``H`` as jets."""

    def __init__(self, G: TensorField, frame: FrameField | None = None):
        self.G = G
        self.frame = frame
        self.dim = G.dim

    def g_jet(self, points, order: int) -> Jet:
        if self.frame is not None:
            b = self.frame.b_jet(points, order)
            return jeinsum("am,an->mn", b, b)
        return self.G.jet(as_points(points, self.dim), order)

    def ginv_jet(self, points, order: int) -> Jet:
        if self.frame is not None:
            c = self.frame.c_jet(points, order)
            return jeinsum("ma,na->mn", c, c)
        pts = as_points(points, self.dim)
        return _inverse_at(self.G.jet(pts, order), pts)

    def h_jet(self, points, order: int) -> Jet:
        if self.frame is None:
            raise ContractViolation("H is only defined for frame-built metrics")
        c = self.frame.c_jet(points, order)
        return jeinsum("ma,mb->ab", c, c)

    def G_at(self, p) -> np.ndarray:
        return self.g_jet(p, 0).value[0]

    def G_inv_at(self, p) -> np.ndarray:
        return self.ginv_jet(p, 0).value[0]

    def H_at(self, p) -> np.ndarray:
        return self.h_jet(p, 0).value[0]

    def pullback(self, cmap: CoordinateMap) -> "MetricField":
        if self.frame is not None:
            return metric_from_frame(self.frame.pullback(cmap))
        return MetricField(cmap.pullback(self.G))

    @classmethod
    def from_exprs(cls, rows) -> "MetricField":
        rows = np.asarray([[ex.lift(e) for e in row] for row in rows], dtype=object)
        return cls(ExprField(rows, rows.shape[0], (LOWER, LOWER)))


def metric_from_frame(f: FrameField) -> MetricField:
    return MetricField(JetFunctionField(lambda p, k: jeinsum("am,an->mn", f.b_jet(p, k), f.b_jet(p, k)),
                                        f.dim, (LOWER, LOWER)), frame=f)


@dataclass(frozen=True)
class ReferenceSystemStack:
    """Inner layer over outer layer; the inner frame is expressed over x.

    ``pullback`` supplies ``b^C_P`` for the inner layer's chart derivatives
    (``d/dxi^C = c^M_C d/dx^M``); it defaults to the outer layer and stays
    fixed under frame transformations of the outer layer.
    """

    outer: FrameField
    inner: FrameField | None = None
    label: str = ""
    pullback: FrameField | None = None

    def __post_init__(self):
        if self.inner is not None:
            if self.inner.dim != self.outer.dim:
                raise ContractViolation("inner and outer layers differ in dimension")
            object.__setattr__(self, "inner", self.inner.as_inner())

    @property
    def dim(self) -> int:
        return self.outer.dim

    @property
    def chart_frame(self) -> FrameField:
        return self.pullback if self.pullback is not None else self.outer

    @property
    def has_inner(self) -> bool:
        return self.inner is not None

    def composite_frame(self) -> FrameField:
        if self.inner is None:
            return self.outer
        return compose_frames(self.inner, self.outer, label=f"{self.label}:composite")

    def metric(self) -> MetricField:
        """Metric of the whole stack, built from the composite frame."""
        return metric_from_frame(self.composite_frame())

    def with_pullback(self, cmap: CoordinateMap) -> "ReferenceSystemStack":
        return ReferenceSystemStack(
            outer=self.outer.pullback(cmap),
            inner=self.inner.pullback(cmap) if self.inner is not None else None,
            label=self.label,
            pullback=self.pullback.pullback(cmap) if self.pullback is not None else None,
        )

    @classmethod
    def identity(cls, dim: int, label: str = "identity") -> "ReferenceSystemStack":
        return cls(FrameField.identity(dim), None, label)


def time_metric(f: FrameField, p, dx, signature: SpaceSignature | None = None) -> dict[str, float]:
    """Quadratic time metrics of a displacement ``dx`` at ``p``."""
    pts = as_points(p, f.dim)
    dx = np.asarray(dx, dtype=float)
    if dx.shape != (f.dim,):
        raise ContractViolation(f"displacement needs {f.dim} components")
    sig = signature or SpaceSignature(f.dim, min(3, f.dim))
    r = sig.external_dim
    dxi = f.b_jet(pts, 0).value[0] @ dx
    return {
        "dxi0_sq": float(dxi @ dxi),
        "dx0_sq": float(dx @ dx),
        "dxi_external_sq": float(dxi[:r] @ dxi[:r]),
        "dxi_internal_sq": float(dxi[r:] @ dxi[r:]),
        "dx_external_sq": float(dx[:r] @ dx[:r]),
        "dx_internal_sq": float(dx[r:] @ dx[r:]),
    }


def flatness_samples(dim: int, count: int = 32, seed: int = 0) -> np.ndarray:
    """Default sample set for flatness tests: random points plus box corners."""
    return np.vstack([sample_points(dim, count, seed), box_corners(dim)])


def classify_transformation(f: FrameField, points=None, tol: float = 1e-10) -> dict:
    """Identity / flat / orthogonal flags tested on a finite sample."""
    pts = flatness_samples(f.dim) if points is None else as_points(points, f.dim)
    if pts.shape[0] == 0:
        raise ContractViolation("need at least one sample point")
    b = f.b_jet(pts, 0).value
    eye = np.eye(f.dim)
    flat = bool(np.abs(b - b[0]).max() <= tol)
    gram = np.einsum("zam,zan->zmn", b, b)
    orthogonal = bool(np.abs(gram - eye).max() <= tol)
    identity = bool(np.abs(b - eye).max() <= tol)
    return {"is_identity": identity, "is_flat": flat, "is_orthogonal": orthogonal, "samples": int(pts.shape[0])}


def apply_frame_transformation(k: FrameField, target):
    """Transform a frame, stack, connection or curvature by the frame field ``k``.

    Frames become ``B . B_k``.  Stacks transform their outer layer and keep the
    chart pull-back of the inner layer.  Connections and curvatures delegate
    to their own ``frame_transformed`` method.
    """
    if isinstance(target, FrameField):
        return compose_frames(target, k, label=f"{target.label}'")
    if isinstance(target, ReferenceSystemStack):
        return ReferenceSystemStack(outer=compose_frames(target.outer, k, label=f"{target.outer.label}'"),
                                    inner=target.inner, label=f"{target.label}'",
                                    pullback=target.chart_frame)
    if hasattr(target, "frame_transformed"):
        return target.frame_transformed(k)
    raise ContractViolation(f"cannot frame-transform {type(target).__name__}")


# -- inversions -----------------------------------------------------------------
@dataclass(frozen=True)
class InversionSpec:
    """Coordinate sign flips plus a set of metric labels whose sign is inverted."""

    coordinate_flips: tuple[int, ...]
    metric_sign_flips: frozenset = frozenset()
    name: str = ""

    def __post_init__(self):
        if any(s not in (1, -1) for s in self.coordinate_flips):
            raise ContractViolation("coordinate flips must be +1 or -1")

    @property
    def dim(self) -> int:
        return len(self.coordinate_flips)

    @property
    def full_coordinate_inversion(self) -> bool:
        return all(s == -1 for s in self.coordinate_flips)

    @property
    def metric_inversion(self) -> bool:
        return bool(self.metric_sign_flips)

    @property
    def dx_sign(self) -> int:
        """Induced sign on dx^Q and dx^0 (only the metric inversion flips them)."""
        return -1 if self.metric_inversion else 1

    @property
    def x0_sign(self) -> int:
        return -1 if self.full_coordinate_inversion else 1

    def compose(self, other: "InversionSpec") -> "InversionSpec":
        flips = tuple(a * b for a, b in zip(self.coordinate_flips, other.coordinate_flips))
        return InversionSpec(flips, self.metric_sign_flips ^ other.metric_sign_flips,
                             f"{self.name}{other.name}")

    # named members
    @classmethod
    def parity(cls, sig: SpaceSignature) -> "InversionSpec":
        return cls(tuple(-1 if i in sig.external else 1 for i in range(1, sig.total_dim + 1)), name="P")

    @classmethod
    def charge(cls, sig: SpaceSignature) -> "InversionSpec":
        return cls(tuple(-1 if i in sig.internal else 1 for i in range(1, sig.total_dim + 1)), name="C")

    @classmethod
    def cpt0(cls, sig: SpaceSignature) -> "InversionSpec":
        return cls((-1,) * sig.total_dim, name="CPT0")

    @classmethod
    def metric_inversion_all(cls, sig: SpaceSignature, labels: Sequence[str] = ("total",)) -> "InversionSpec":
        return cls((1,) * sig.total_dim, frozenset(labels), name="T(M)")

    @classmethod
    def cpt(cls, sig: SpaceSignature, labels: Sequence[str] = ("total",)) -> "InversionSpec":
        return cls.cpt0(sig).compose(cls.metric_inversion_all(sig, labels))


@dataclass(frozen=True)
class ScenarioState:
    """Fields of a scenario together with the accumulated inversion state.

    The stored fields never change; ``coordinate_signs`` and ``metric_signs``
    record which inversions are in effect, and the ``effective_*`` accessors
    return the fields re-expressed in the flipped chart.
    """

    stacks: Mapping[str, ReferenceSystemStack]
    charges: Mapping[str, TensorField] = field(default_factory=dict)
    coordinate_signs: tuple[int, ...] = ()
    metric_signs: frozenset = frozenset()

    def __post_init__(self):
        if not self.coordinate_signs:
            dim = next(iter(self.stacks.values())).dim
            object.__setattr__(self, "coordinate_signs", (1,) * dim)

    @property
    def flip_map(self) -> CoordinateMap | None:
        if all(s == 1 for s in self.coordinate_signs):
            return None
        return CoordinateMap.linear(np.diag(self.coordinate_signs))

    @property
    def dx_sign(self) -> int:
        return -1 if self.metric_signs else 1

    def effective_stack(self, name: str) -> ReferenceSystemStack:
        cmap = self.flip_map
        stack = self.stacks[name]
        return stack if cmap is None else stack.with_pullback(cmap)

    def effective_charge(self, name: str) -> TensorField:
        cmap = self.flip_map
        f = self.charges[name]
        return f if cmap is None else cmap.pullback(f)

    def to_chart(self, points) -> np.ndarray:
        """Map original-chart points into the current chart."""
        return np.asarray(points, dtype=float) * np.asarray(self.coordinate_signs, dtype=float)


def apply_cpt(spec: InversionSpec, state: ScenarioState) -> ScenarioState:
    """Toggle coordinate and metric inversions on a scenario state."""
    if spec.dim != len(state.coordinate_signs):
        raise ContractViolation("inversion spec dimension does not match the scenario")
    signs = tuple(a * b for a, b in zip(state.coordinate_signs, spec.coordinate_flips))
    return replace(state, coordinate_signs=signs, metric_signs=state.metric_signs ^ spec.metric_sign_flips)
