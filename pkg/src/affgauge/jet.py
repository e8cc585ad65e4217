"""Truncated Taylor jets for exact forward-mode derivatives.

A :class:`Jet` carries a batch of tensor values together with their full
partial-derivative tensors up to a fixed order.  Coefficient ``j`` has shape
``(npoints, *vshape, dim, ..., dim)`` with ``j`` trailing derivative axes, and
stores ``d^j f / dx_{i1} ... dx_{ij}`` (no factorials).

Products follow the general Leibniz rule over subsets of derivative slots,
elementary functions follow Faa di Bruno over set partitions, and the matrix
inverse is expanded from ``C B = I``.  Everything stays exact to rounding, so
higher-level quantities (connections, curvatures, divergences) can be
differentiated by asking for a higher-order jet of their inputs and calling
:meth:`Jet.grad`.
"""

from __future__ import annotations

from functools import lru_cache
from itertools import combinations
from typing import Callable, Sequence, Union

import numpy as np

from .errors import SingularityError

# Derivative slots use upper-case letters; value slots lower-case; 'z' is the batch axis.
_DERIV = "ABCDEFGHIJ"
_VALUE = "abcdefghijklmnopqrstuvwxy"
_DETERMINANT_FLOOR = 1e-12

Operand = Union["Jet", np.ndarray, float, int]


@lru_cache(maxsize=None)
def _set_partitions(n: int) -> tuple[tuple[tuple[int, ...], ...], ...]:
    def rec(items):
        if not items:
            yield []
            return
        first, rest = items[0], items[1:]
        for part in rec(rest):
            yield [(first,)] + part
            for i in range(len(part)):
                yield part[:i] + [(first,) + part[i]] + part[i + 1:]

    return tuple(tuple(sorted(p)) for p in rec(tuple(range(n))))


@lru_cache(maxsize=None)
def _shuffles(j: int, s: int) -> tuple[tuple[int, ...], ...]:
    """Axis permutations placing the first ``s`` source axes at every size-``s`` subset."""
    perms = []
    for subset in combinations(range(j), s):
        rest = [p for p in range(j) if p not in subset]
        perm = [0] * j
        for k, p in enumerate(subset):
            perm[p] = k
        for k, p in enumerate(rest):
            perm[p] = s + k
        perms.append(tuple(perm))
    return tuple(perms)


class Jet:
    """Batch of tensor values with derivative tensors up to ``order``."""

    __slots__ = ("coeffs", "dim")

    def __init__(self, coeffs: Sequence[np.ndarray], dim: int):
        self.coeffs = tuple(coeffs)
        self.dim = dim

    # -- construction -----------------------------------------------------
    @classmethod
    def variable(cls, points: np.ndarray, order: int) -> "Jet":
        """Identity jet of the coordinates at ``points`` (shape ``(n, dim)``)."""
        points = np.asarray(points, dtype=float)
        n, dim = points.shape
        coeffs = [points.copy()]
        if order >= 1:
            coeffs.append(np.broadcast_to(np.eye(dim), (n, dim, dim)).copy())
        for j in range(2, order + 1):
            coeffs.append(np.zeros((n, dim) + (dim,) * j))
        return cls(coeffs, dim)

    @classmethod
    def constant(cls, value, npoints: int, dim: int, order: int) -> "Jet":
        value = np.asarray(value, dtype=float)
        base = np.broadcast_to(value, (npoints,) + value.shape).copy()
        coeffs = [base] + [np.zeros(base.shape + (dim,) * j) for j in range(1, order + 1)]
        return cls(coeffs, dim)

    # -- shape information ---------------------------------------------
    @property
    def order(self) -> int:
        return len(self.coeffs) - 1

    @property
    def value(self) -> np.ndarray:
        return self.coeffs[0]

    @property
    def npoints(self) -> int:
        return self.coeffs[0].shape[0]

    @property
    def vshape(self) -> tuple[int, ...]:
        return self.coeffs[0].shape[1:]

    def __repr__(self) -> str:
        return f"Jet(order={self.order}, npoints={self.npoints}, vshape={self.vshape})"

    # -- structural operations -------------------------------------------
    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise ValueError(f"cannot raise jet order {self.order} to {order}")
        return Jet(self.coeffs[: order + 1], self.dim)

    def grad(self) -> "Jet":
        """Drop one order and expose the first derivative slot as a value axis."""
        if self.order < 1:
            raise ValueError("grad() needs a jet of order >= 1")
        return Jet(self.coeffs[1:], self.dim)

    def __getitem__(self, index) -> "Jet":
        if not isinstance(index, tuple):
            index = (index,)
        key = (slice(None),) + index
        return Jet([c[key] for c in self.coeffs], self.dim)

    def transpose(self, *perm: int) -> "Jet":
        nv = len(self.vshape)
        out = []
        for j, c in enumerate(self.coeffs):
            axes = [0] + [1 + p for p in perm] + list(range(1 + nv, 1 + nv + j))
            out.append(np.transpose(c, axes))
        return Jet(out, self.dim)

    def reshape(self, *vshape: int) -> "Jet":
        out = [c.reshape((c.shape[0],) + tuple(vshape) + (self.dim,) * j) for j, c in enumerate(self.coeffs)]
        return Jet(out, self.dim)

    @staticmethod
    def stack(jets: Sequence["Jet"], axis: int = 0) -> "Jet":
        order = min(j.order for j in jets)
        dim = jets[0].dim
        out = [np.stack([j.coeffs[k] for j in jets], axis=1 + axis) for k in range(order + 1)]
        return Jet(out, dim)

    # -- linear arithmetic ------------------------------------------------
    def _promote(self, other: Operand) -> "Jet":
        if isinstance(other, Jet):
            return other
        arr = np.broadcast_to(np.asarray(other, dtype=float), (self.npoints,) + self.vshape)
        return Jet([arr] + [np.zeros(arr.shape + (self.dim,) * j) for j in range(1, self.order + 1)], self.dim)

    def __add__(self, other: Operand) -> "Jet":
        if not isinstance(other, Jet):
            coeffs = list(self.coeffs)
            coeffs[0] = coeffs[0] + np.asarray(other, dtype=float)
            return Jet(coeffs, self.dim)
        order = min(self.order, other.order)
        return Jet([self.coeffs[k] + other.coeffs[k] for k in range(order + 1)], self.dim)

    __radd__ = __add__

    def __neg__(self) -> "Jet":
        return Jet([-c for c in self.coeffs], self.dim)

    def __sub__(self, other: Operand) -> "Jet":
        return self + (-other)

    def __rsub__(self, other: Operand) -> "Jet":
        return (-self) + other

    def scale(self, factor: float) -> "Jet":
        return Jet([factor * c for c in self.coeffs], self.dim)

    # -- products ---------------------------------------------------------
    def __mul__(self, other: Operand) -> "Jet":
        if not isinstance(other, Jet):
            arr = np.asarray(other, dtype=float)
            if arr.ndim == 0:
                return self.scale(float(arr))
            other = self._promote(arr)
        letters = _VALUE[: len(self.vshape)]
        return jeinsum(f"{letters},{letters}->{letters}", self, other)

    __rmul__ = __mul__

    def __truediv__(self, other: Operand) -> "Jet":
        if not isinstance(other, Jet):
            return self * (1.0 / np.asarray(other, dtype=float))
        return self * other.reciprocal()

    def __rtruediv__(self, other: Operand) -> "Jet":
        return self.reciprocal() * other

    # -- elementary functions ---------------------------------------------
    def apply(self, derivs: Callable[[np.ndarray, int], list[np.ndarray]]) -> "Jet":
        """Compose an elementwise scalar function given its derivative ladder.

        ``derivs(x, k)`` returns ``[f(x), f'(x), ..., f^(k)(x)]``.
        """
        k = self.order
        ladder = derivs(self.coeffs[0], k)
        vl = _VALUE[: len(self.vshape)]
        out = [ladder[0]]
        for j in range(1, k + 1):
            letters = _DERIV[:j]
            acc = np.zeros(self.coeffs[j].shape)
            for part in _set_partitions(j):
                specs = ["z" + vl] + ["z" + vl + "".join(letters[i] for i in block) for block in part]
                ops = [ladder[len(part)]] + [self.coeffs[len(block)] for block in part]
                acc = acc + np.einsum(",".join(specs) + "->z" + vl + letters, *ops)
            out.append(acc)
        return Jet(out, self.dim)

    def sin(self) -> "Jet":
        def ladder(x, k):
            s, c = np.sin(x), np.cos(x)
            cycle = [s, c, -s, -c]
            return [cycle[i % 4] for i in range(k + 1)]

        return self.apply(ladder)

    def cos(self) -> "Jet":
        def ladder(x, k):
            s, c = np.sin(x), np.cos(x)
            cycle = [c, -s, -c, s]
            return [cycle[i % 4] for i in range(k + 1)]

        return self.apply(ladder)

    def exp(self) -> "Jet":
        return self.apply(lambda x, k: [np.exp(x)] * (k + 1))

    def log(self) -> "Jet":
        def ladder(x, k):
            out = [np.log(x)]
            fact = 1.0
            for i in range(1, k + 1):
                out.append(((-1.0) ** (i - 1)) * fact * x ** (-i))
                fact *= i
            return out

        return self.apply(ladder)

    def power(self, exponent: float) -> "Jet":
        def ladder(x, k):
            out = []
            coef = 1.0
            for i in range(k + 1):
                out.append(coef * x ** (exponent - i) if coef != 0.0 else np.zeros_like(x))
                coef *= exponent - i
            return out

        if float(exponent).is_integer() and exponent >= 0:
            n = int(exponent)
            if n == 0:
                return Jet.constant(np.ones(self.vshape), self.npoints, self.dim, self.order)
            result = self
            for _ in range(n - 1):
                result = result * self
            return result
        return self.apply(ladder)

    def sqrt(self) -> "Jet":
        return self.power(0.5)

    def reciprocal(self) -> "Jet":
        return self.power(-1.0)


def _split(x: Operand):
    if isinstance(x, Jet):
        return x, None
    return None, np.asarray(x, dtype=float)


def jeinsum(subscripts: str, a: Operand, b: Operand) -> Jet:
    """Two-operand einsum over value axes, propagated through the jet.

    ``subscripts`` names value axes only (letters a..y), e.g. ``"ab,bc->ac"``.
    Either operand may be a constant array of exactly the value shape, or a
    batched constant with a leading ``npoints`` axis.
    """
    lhs, out_spec = subscripts.replace(" ", "").split("->")
    spec_a, spec_b = lhs.split(",")
    ja, ca = _split(a)
    jb, cb = _split(b)
    if ja is None and jb is None:
        raise TypeError("jeinsum needs at least one Jet operand")

    if ja is None or jb is None:
        jet, const = (jb, ca) if ja is None else (ja, cb)
        jspec, cspec = (spec_b, spec_a) if ja is None else (spec_a, spec_b)
        cprefix = "z" if const.ndim == len(cspec) + 1 else ""
        out = []
        for j, c in enumerate(jet.coeffs):
            letters = _DERIV[:j]
            if ja is None:
                expr = f"{cprefix}{cspec},z{jspec}{letters}->z{out_spec}{letters}"
                out.append(np.einsum(expr, const, c))
            else:
                expr = f"z{jspec}{letters},{cprefix}{cspec}->z{out_spec}{letters}"
                out.append(np.einsum(expr, c, const))
        return Jet(out, jet.dim)

    order = min(ja.order, jb.order)
    out = []
    for j in range(order + 1):
        letters = _DERIV[:j]
        acc = None
        for s in range(j + 1):
            base = np.einsum(
                f"z{spec_a}{letters[:s]},z{spec_b}{letters[s:]}->z{out_spec}{letters}",
                ja.coeffs[s],
                jb.coeffs[j - s],
            )
            nout = base.ndim - j
            for perm in _shuffles(j, s):
                axes = list(range(nout)) + [nout + p for p in perm]
                term = np.transpose(base, axes) if s not in (0, j) else base
                acc = term if acc is None else acc + term
        out.append(acc)
    return Jet(out, ja.dim)


def inverse(b: Jet, floor: float = _DETERMINANT_FLOOR) -> Jet:
    """Jet of the matrix inverse of a square-matrix jet (value shape ``(n, n)``)."""
    b0 = b.coeffs[0]
    det = np.linalg.det(b0)
    bad = np.flatnonzero(~(np.abs(det) >= floor))
    if bad.size:
        i = int(bad[0])
        raise SingularityError(f"singular matrix (|det| = {abs(det[i]):.3e}) at batch index {i}", i)
    c0 = np.linalg.inv(b0)
    coeffs = [c0]
    for j in range(1, b.order + 1):
        letters = _DERIV[:j]
        acc = np.zeros(b.coeffs[j].shape)
        for s in range(j):
            base = np.einsum(f"zab{letters[:s]},zbc{letters[s:]}->zac{letters}", coeffs[s], b.coeffs[j - s])
            for perm in _shuffles(j, s):
                axes = [0, 1, 2] + [3 + p for p in perm]
                acc = acc + (np.transpose(base, axes) if s != 0 else base)
        coeffs.append(-np.einsum(f"zab{letters},zbc->zac{letters}", acc, c0))
    return Jet(coeffs, b.dim)


def matmul(a: Operand, b: Operand) -> Jet:
    return jeinsum("ab,bc->ac", a, b)
