"""Energy-momentum, action, Dirac, Lorentz-force and Heisenberg/Schrodinger residuals."""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np

from ..connections import CovariantDerivativeField, covariant_jet
from ..curvature import CurvatureTensor
from ..errors import ContractViolation
from ..fields import UPPER, LieBracket, TensorField, as_points
from ..jet import jeinsum
from .charges import ChargeDriver, UnitField, unit_gradient
from .lines import GradientLine, elementary_action

UNIT_TOL = 1e-9
ORTHOGONAL_TOL = 1e-10


class UnsupportedSignatureError(ContractViolation):
    """The metric is not positive definite where a gamma set was requested."""


# -- energy and momentum ---------------------------------------------------------------
@dataclass
class EnergyMomentum:
    E0: np.ndarray      # p_Q eps^Q
    E_up0: np.ndarray   # p^Q epsbar_Q
    p: np.ndarray       # p_Q (covariant)
    p_up: np.ndarray    # G^{QP} p_P
    H0: np.ndarray      # P_Q eps^Q
    H_up0: np.ndarray   # P^Q epsbar_Q
    P: np.ndarray       # partial derivatives
    P_up: np.ndarray
    G00: np.ndarray     # eps^T G eps


def energy_momentum(driver: ChargeDriver, points, direction) -> EnergyMomentum:
    """All energy/momentum quantities of the driver along unit ``direction`` (batched)."""
    pts = as_points(points, driver.dim)
    eps = np.broadcast_to(np.asarray(direction, dtype=float), pts.shape)
    drift = np.abs(np.linalg.norm(eps, axis=1) - 1.0).max()
    if drift > UNIT_TOL:
        raise ContractViolation(f"direction is not unit normalized (|norm - 1| = {drift:.3e})")
    p = driver.covariant_jet(pts, 0).value
    P = driver.partial_jet(pts, 0).value
    G = driver.metric.g_jet(pts, 0).value
    Ginv = driver.metric.ginv_jet(pts, 0).value
    G00 = np.einsum("zm,zmn,zn->z", eps, G, eps)
    epsbar = np.einsum("zqh,zh->zq", G, eps) / G00[:, None]
    p_up = np.einsum("zqp,zp->zq", Ginv, p)
    P_up = np.einsum("zqp,zp->zq", Ginv, P)
    return EnergyMomentum(
        E0=np.einsum("zq,zq->z", p, eps), E_up0=np.einsum("zq,zq->z", p_up, epsbar), p=p, p_up=p_up,
        H0=np.einsum("zq,zq->z", P, eps), H_up0=np.einsum("zq,zq->z", P_up, epsbar), P=P, P_up=P_up, G00=G00,
    )


def energy_momentum_residual(driver: ChargeDriver, points, direction) -> np.ndarray:
    """``|E_0 E^0 - p_Q p^Q|`` per point; zero exactly when ``direction`` is the unit gradient."""
    em = energy_momentum(driver, points, direction)
    return np.abs(em.E0 * em.E_up0 - np.einsum("zq,zq->z", em.p, em.p_up))


def momentum_velocity_residual(driver: ChargeDriver, line: GradientLine) -> float:
    """``max |p^Q - E^0 dx^Q/dx0|`` over the samples of ``line``."""
    em = energy_momentum(driver, line.points, line.tangents)
    return float(np.abs(em.p_up - em.E_up0[:, None] * line.tangents).max())


# -- gamma matrices -------------------------------------------------------------------
_PAULI = (np.array([[0, 1], [1, 0]], dtype=complex), np.array([[0, -1j], [1j, 0]]),
          np.array([[1, 0], [0, -1]], dtype=complex))


def _kron(*ms) -> np.ndarray:
    return reduce(np.kron, ms, np.eye(1, dtype=complex))


def euclidean_generators(dim: int) -> np.ndarray:
    """Hermitian ``gamma^A`` with ``{gamma^A, gamma^B} = 2 delta^AB``, size ``2^floor(dim/2)``."""
    n = dim // 2
    s1, s2, s3 = _PAULI
    eye = np.eye(2, dtype=complex)
    out = []
    for k in range(n):
        head, tail = [s3] * k, [eye] * (n - k - 1)
        out.append(_kron(*head, s1, *tail))
        out.append(_kron(*head, s2, *tail))
    if dim % 2:
        out.append(_kron(*[s3] * n))
    return np.asarray(out)


@dataclass
class GammaSet:
    dim: int
    matrices: np.ndarray   # (D, s, s), upper index
    ginv: np.ndarray

    @property
    def size(self) -> int:
        return self.matrices.shape[-1]

    def contract(self, p: np.ndarray) -> np.ndarray:
        """``gamma^P p_P``."""
        return np.einsum("pij,p->ij", self.matrices, p)

    def anticommutator_residual(self) -> float:
        g = self.matrices
        anti = np.einsum("mij,njk->mnik", g, g) + np.einsum("nij,mjk->mnik", g, g)
        target = 2.0 * self.ginv[:, :, None, None] * np.eye(self.size)
        return float(np.abs(anti - target).max())


def build_gamma_set(G) -> GammaSet:
    """``gamma^M = C^M_A gamma^A`` with ``C`` the symmetric square root of ``G^{-1}``."""
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise ContractViolation("metric must be a square matrix")
    if not np.allclose(G, G.T, atol=1e-12):
        raise ContractViolation("metric must be symmetric")
    w, V = np.linalg.eigh(G)
    if w.min() <= 0:
        raise UnsupportedSignatureError(f"metric is not positive definite (min eigenvalue {w.min():.3e})")
    C = (V / np.sqrt(w)) @ V.T
    base = euclidean_generators(G.shape[0])
    return GammaSet(G.shape[0], np.einsum("ma,aij->mij", C, base), C @ C.T)


# -- action ---------------------------------------------------------------------------
def is_orthogonal(driver: ChargeDriver, points, tol: float = ORTHOGONAL_TOL) -> bool:
    G = driver.metric.g_jet(as_points(points, driver.dim), 0).value
    return bool(np.abs(G - np.eye(driver.dim)).max() <= tol)


@dataclass
class ActionReport:
    elementary: float
    full: float | None = None
    ratio: float | None = None
    note: str | None = None


def _trapezoid(y: np.ndarray, x: np.ndarray) -> float:
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


def affine_action(driver: ChargeDriver, path, x0=None, gammas: bool = False) -> ActionReport:
    """Elementary action ``int p_Q dx^Q`` along ``path`` (trapezoidal).

    ``path`` is a :class:`GradientLine` or an array of points.  With
    ``gammas=True`` on an orthogonal scenario the full action
    ``int (gamma^P p_P + eps^P p_P) dx0`` is added, taking the positive
    eigenvalue branch of ``gamma^P p_P``.
    """
    if isinstance(path, GradientLine):
        pts, x0, eps = path.points, path.x0, path.tangents
    else:
        pts, eps = np.asarray(path, dtype=float), None
    out = ActionReport(elementary_action(driver, pts))
    if not gammas:
        return out
    if eps is None or x0 is None:
        out.note = "full action needs a gradient line"
        return out
    if not is_orthogonal(driver, pts):
        out.note = "scenario is not orthogonal"
        return out
    em = energy_momentum(driver, pts, eps)
    G = driver.metric.g_jet(pts[:1], 0).value[0]
    gs = build_gamma_set(G)
    branch = np.array([np.linalg.eigvalsh(gs.contract(p)).max() for p in em.p])
    out.full = _trapezoid(branch + em.E0, x0)
    out.ratio = out.full / out.elementary if out.elementary != 0 else float("nan")
    return out


# -- Dirac ------------------------------------------------------------------------------
@dataclass
class DiracReport:
    squared: float             # max || (gamma^P p_P)^2 - rho_0^2 I ||
    linear: float              # max over samples of min over signs || gamma^P p_P -+ rho_0 I ||
    samples: int
    skipped: str | None = None


def dirac_residual(driver: ChargeDriver, line: GradientLine) -> DiracReport:
    """Operator-norm residuals of the Dirac relation along ``line``.

    The squared form is the invariant statement; the linear form depends on
    the choice of generators and is generally nonzero.
    """
    pts = line.points
    if not is_orthogonal(driver, pts):
        return DiracReport(float("nan"), float("nan"), 0, skipped="scenario is not orthogonal (G != I)")
    em = energy_momentum(driver, pts, line.tangents)
    gs = build_gamma_set(np.eye(driver.dim))
    eye = np.eye(gs.size)
    sq, lin = 0.0, 0.0
    for p, r0 in zip(em.p, em.E0):
        M = gs.contract(p)
        sq = max(sq, np.linalg.norm(M @ M - r0 ** 2 * eye, 2))
        lin = max(lin, min(np.linalg.norm(M - r0 * eye, 2), np.linalg.norm(M + r0 * eye, 2)))
    return DiracReport(float(sq), float(lin), len(pts))


# -- Lorentz force ----------------------------------------------------------------------
@dataclass
class LorentzReport:
    lhs: np.ndarray           # w . rho_{;P;Q} eps^Q
    rhs: np.ndarray           # w . (E_{0;P} - p_Q eps^Q_{;P} + [rho R_PQ] eps^Q)
    torsion: np.ndarray       # w . T^H_PQ rho_{;H} eps^Q
    terms: dict

    @property
    def residual(self) -> float:
        """Both sides including the torsion term."""
        return float(np.abs(self.lhs - self.rhs - self.torsion).max())

    @property
    def residual_torsion_free(self) -> float:
        return float(np.abs(self.lhs - self.rhs).max())

    @property
    def torsion_size(self) -> float:
        return float(np.abs(self.torsion).max())


def lorentz_force(driver: ChargeDriver, points, direction: TensorField | None = None) -> LorentzReport:
    """Both sides of the force law at ``points``.

    Every term is formed on the full charge tensor and the driver's
    contraction is applied last: a fixed contraction does not commute with
    covariant differentiation on a curved connection.

    ``direction`` is an upper vector field (default: the unit gradient of
    the driver).  The torsion term vanishes for symmetric connections; it is
    reported separately so the torsion-free law can be checked on its own.
    """
    pts = as_points(points, driver.dim)
    eps_field = direction or unit_gradient(driver)
    conn, rho = driver.conn, driver.charge
    gam = conn.jet(pts, 1)
    g0 = gam.truncate(0)
    eps = eps_field.jet(pts, 1)
    eps0 = eps.value
    first = CovariantDerivativeField(rho, conn)
    # lhs: second covariant derivative, slots [..., P, Q] = rho_{;P;Q}
    second = CovariantDerivativeField(first, conn).jet(pts, 0).value
    lhs = np.einsum("...pq,zq->...p", second, eps0) if rho.rank == 0 else np.einsum("zmnpq,zq->zmnp", second, eps0)
    # rhs on the full tensor: E_0 = rho_{;Q} eps^Q, then its covariant derivative
    d1 = first.jet(pts, 1)
    lead = "mn"[: rho.rank]
    E0 = jeinsum(f"{lead}q,q->{lead}", d1, eps)
    dE0 = covariant_jet(E0, rho.variance, g0).value
    deps = covariant_jet(eps, (UPPER,), g0).value  # [Q, P] = eps^Q_{;P}
    middle = np.einsum(f"z{lead}q,zqp->z{lead}p", d1.value, deps)
    if rho.rank == 2:
        K = CurvatureTensor(conn).jet(pts, 0).value
        r0 = rho.jet(pts, 0).value
        bracket = np.einsum("zmh,zhnpq->zmnpq", r0, K) + np.einsum("zhn,zhmpq->zmnpq", r0, K)
        curv = np.einsum("zmnpq,zq->zmnp", bracket, eps0)
    else:
        curv = np.zeros_like(dE0)
    T = np.swapaxes(g0.value, 2, 3) - g0.value       # T^H_PQ = Gamma^H_QP - Gamma^H_PQ
    torsion = np.einsum(f"zhpq,z{lead}h,zq->z{lead}p", T, d1.value, eps0)
    w = driver.weights

    def contract(a):
        return a if w is None else np.einsum("mn,zmnp->zp", w, a)

    lhs, dE0, middle, curv, torsion = (contract(a) for a in (lhs, dE0, middle, curv, torsion))
    return LorentzReport(lhs, dE0 - middle + curv, torsion,
                         {"dE0": dE0, "middle": middle, "curvature": curv})


# -- Heisenberg / Schrodinger -----------------------------------------------------------
@dataclass
class HeisenbergReport:
    heisenberg: float       # max |L_H X - d/dx0 (dragged X)|
    schrodinger: float      # max |H f - d f_L / dx0|
    bracket_scale: float
    samples: int


def _flow_with_jacobian(H: TensorField, start: np.ndarray, step: float, n_steps: int):
    """RK4 for ``x' = H(x)`` and ``J' = DH(x) J`` together."""
    D = start.shape[0]

    def rhs(x, J):
        j = H.jet(x[None], 1)
        return j.value[0], j.grad().value[0] @ J

    xs, Js = [start.copy()], [np.eye(D)]
    x, J = start.copy(), np.eye(D)
    for _ in range(n_steps):
        a1, b1 = rhs(x, J)
        a2, b2 = rhs(x + 0.5 * step * a1, J + 0.5 * step * b1)
        a3, b3 = rhs(x + 0.5 * step * a2, J + 0.5 * step * b2)
        a4, b4 = rhs(x + step * a3, J + step * b3)
        x = x + step / 6 * (a1 + 2 * a2 + 2 * a3 + a4)
        J = J + step / 6 * (b1 + 2 * b2 + 2 * b3 + b4)
        xs.append(x)
        Js.append(J)
    return np.asarray(xs), np.asarray(Js)


def heisenberg_schrodinger_check(X: TensorField, H: UnitField | TensorField, f: TensorField, start,
                                 step: float = 1e-2, n_steps: int = 100) -> HeisenbergReport:
    """Compare ``[H, X]`` (Lie derivative of ``X`` along ``H``) and ``H f`` with x0-derivatives.

    The x0-derivative of ``X`` is taken on the pulled-back samples
    ``J^{-1} X(phi_t)``, with ``J`` the flow Jacobian, by central differences;
    ``df/dx0`` is a central difference of ``f`` along the same samples.
    """
    start = np.asarray(start, dtype=float).reshape(-1)
    xs, Js = _flow_with_jacobian(H, start, step, n_steps)
    Xv = X.jet(xs, 0).value
    Y = np.linalg.solve(Js, Xv[..., None])[..., 0]
    dY = (Y[2:] - Y[:-2]) / (2 * step)
    dragged = np.einsum("kqp,kp->kq", Js[1:-1], dY)
    inner = xs[1:-1]
    bracket = LieBracket(H, X).jet(inner, 0).value
    fv = f.jet(xs, 0).value.reshape(len(xs))
    df = (fv[2:] - fv[:-2]) / (2 * step)
    Hf = np.einsum("kq,kq->k", H.jet(inner, 0).value, f.jet(inner, 1).grad().value.reshape(len(inner), -1))
    return HeisenbergReport(float(np.abs(bracket - dragged).max()), float(np.abs(Hf - df).max()),
                            float(np.abs(bracket).max()), len(inner))
