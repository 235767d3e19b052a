"""Jacobi boundary-value solutions along a geodesic and the two-point quantities built on them.

Notation along a segment on [-d/2, d/2]:
    J10  solves J'' + k J = 0 with J(-d/2)=1, J(d/2)=0
    J01  solves the same with J(-d/2)=0, J(d/2)=1
    J    = J10 + J01
    C    = (J'(d/2) - J'(-d/2)) / 2
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson, simpson

from .errors import ConjugatePoint, DomainError, SingularBasis
from .comparison import cs, sn, tn
from . import surface


@dataclass(eq=False)
class JacobiBasis:
    s: np.ndarray
    kappa: np.ndarray
    J10: np.ndarray
    dJ10: np.ndarray
    J01: np.ndarray
    dJ01: np.ndarray
    J: np.ndarray
    dJ: np.ndarray
    C: float
    segment: surface.GeodesicSegment | None = None

    @property
    def d(self):
        return float(self.s[-1] - self.s[0])

    @property
    def dJ_left(self):
        return float(self.dJ[0])

    @property
    def dJ_right(self):
        return float(self.dJ[-1])

    @property
    def dJ01_left(self):
        return float(self.dJ01[0])

    @property
    def dJ10_right(self):
        return float(self.dJ10[-1])


def _assemble(s, fund, kappa, segment=None):
    y1, dy1, y2, dy2 = fund[:, 0], fund[:, 1], fund[:, 2], fund[:, 3]
    if np.any(y2[1:] <= 0):
        first = int(np.argmax(y2[1:] <= 0)) + 1
        raise ConjugatePoint(f"Jacobi field vanishing at -d/2 vanishes again at s={s[first]:.6g}")
    J01 = y2 / y2[-1]
    dJ01 = dy2 / y2[-1]
    J10 = y1 - y1[-1] * J01
    dJ10 = dy1 - y1[-1] * dJ01
    J = J10 + J01
    dJ = dJ10 + dJ01
    C = 0.5 * (dJ[-1] - dJ[0])
    return JacobiBasis(s, kappa, J10, dJ10, J01, dJ01, J, dJ, float(C), segment)


def solve_jacobi_basis(segment):
    """Jacobi basis along a geodesic segment from its stored fundamental solutions."""
    m = segment.metric
    kappa = m.kappa(segment.pos[:, 0], segment.pos[:, 1])
    return _assemble(segment.s, segment.fundamental, kappa, segment)


def fundamental_solutions(kappa_fn, d, n=1024):
    """RK4 for Y'' + k(s) Y = 0 on [-d/2, d/2], batched over the entries of ``d``.

    ``kappa_fn(s)`` receives an array of shape (B,) (one abscissa per problem)
    and returns curvatures of the same shape. Returns grids (B, n+1) and
    fundamental solutions (B, n+1, 4) ordered as (Y1, Y1', Y2, Y2').
    """
    d = np.atleast_1d(np.asarray(d, float))
    if n % 2:
        raise DomainError("grid size must be even (Simpson)")
    h = d / n
    B = len(d)
    Y = np.zeros((B, 4))
    Y[:, 0] = 1.0
    Y[:, 3] = 1.0
    out = np.empty((n + 1, B, 4))
    out[0] = Y
    kap = np.empty((n + 1, B))
    s0 = -d / 2
    k_prev = np.broadcast_to(kappa_fn(s0), (B,)).astype(float)
    kap[0] = k_prev

    def f(Y, k):
        return np.stack([Y[:, 1], -k * Y[:, 0], Y[:, 3], -k * Y[:, 2]], axis=1)

    hb = h[:, None]
    for i in range(n):
        s = s0 + i * h
        k_mid = np.broadcast_to(kappa_fn(s + h / 2), (B,))
        k_next = np.broadcast_to(kappa_fn(s + h), (B,))
        k1 = f(Y, k_prev)
        k2 = f(Y + 0.5 * hb * k1, k_mid)
        k3 = f(Y + 0.5 * hb * k2, k_mid)
        k4 = f(Y + hb * k3, k_next)
        Y = Y + hb / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i + 1] = Y
        kap[i + 1] = k_next
        k_prev = k_next
    grids = s0[:, None] + h[:, None] * np.arange(n + 1)[None, :]
    return grids, np.transpose(out, (1, 0, 2)), kap.T


def jacobi_bases_from_kappa(kappa_fn, d, n=1024):
    grids, fund, kap = fundamental_solutions(kappa_fn, d, n)
    return [_assemble(grids[b], fund[b], kap[b]) for b in range(len(grids))]


def jacobi_basis_from_kappa(kappa_fn, d, n=1024):
    """Basis for a prescribed curvature profile k(s) on [-d/2, d/2] (no surface needed)."""
    return jacobi_bases_from_kappa(kappa_fn, [d], n)[0]


def solve_inhomogeneous(basis, rhs, bv_left, bv_right):
    """Solution of J'' + k J = M with J(-d/2)=bv_left, J(d/2)=bv_right by the Green's-function quadrature."""
    W = basis.dJ10_right
    if abs(W) < 1e-12:
        raise SingularBasis(f"(J10)'(d/2) = {W!r}")
    M = np.broadcast_to(np.asarray(rhs, float), basis.s.shape)
    left = cumulative_simpson(basis.J01 * M, x=basis.s, initial=0.0)
    tail = cumulative_simpson(basis.J10 * M, x=basis.s, initial=0.0)
    right = tail[-1] - tail
    return (basis.J10 * bv_left + basis.J01 * bv_right
            + basis.J10 * left / W + basis.J01 * right / W)


def check_reciprocity(basis):
    return abs(basis.dJ01_left + basis.dJ10_right)


def index_form(basis):
    """Half the index form of J: (1/2) int (J'^2 - k J^2) ds."""
    return 0.5 * simpson(basis.dJ ** 2 - basis.kappa * basis.J ** 2, x=basis.s)


def comparison_envelopes(basis, k_lo, k_hi):
    """Model-space envelopes (lower, upper) for every quantity in the sandwich check."""
    s, d = basis.s, basis.d
    env = {}
    env["J"] = (cs(k_lo, s) / cs(k_lo, d / 2), cs(k_hi, s) / cs(k_hi, d / 2))
    env["J10"] = (sn(k_lo, d / 2 - s) / sn(k_lo, d), sn(k_hi, d / 2 - s) / sn(k_hi, d))
    env["J01"] = (sn(k_lo, d / 2 + s) / sn(k_lo, d), sn(k_hi, d / 2 + s) / sn(k_hi, d))
    env["dJ_left"] = (tn(k_lo, d / 2), tn(k_hi, d / 2))
    env["dJ_right"] = (-tn(k_hi, d / 2), -tn(k_lo, d / 2))
    env["dJ01_left"] = (1 / sn(k_lo, d), 1 / sn(k_hi, d))
    env["C"] = (-tn(k_hi, d / 2), -tn(k_lo, d / 2))
    return env


def check_comparison_sandwich(basis, k_lo, k_hi):
    """Max violation of each comparison inequality (positive means violated).

    Orientation: a larger curvature makes J, J10, J01 larger and the endpoint
    slopes steeper. Comparison with a larger curvature gives the upper envelope.
    """
    env = comparison_envelopes(basis, k_lo, k_hi)
    values = {"J": basis.J, "J10": basis.J10, "J01": basis.J01, "dJ_left": basis.dJ_left,
              "dJ_right": basis.dJ_right, "dJ01_left": basis.dJ01_left, "C": basis.C}
    report = {}
    for key, (lo, hi) in env.items():
        val = np.asarray(values[key])
        lo_, hi_ = np.minimum(lo, hi), np.maximum(lo, hi)
        report[key] = float(max(np.max(lo_ - val), np.max(val - hi_)))
    report["max"] = max(report.values())
    return report


# ---------------------------------------------------------------- two-point quantities

@dataclass(frozen=True)
class CurvatureAlong:
    kappa: np.ndarray
    k1: np.ndarray   # dk(e1)
    k2: np.ndarray   # dk(gamma')
    lap: np.ndarray
    k11: np.ndarray  # Hess k(e1, e1)
    k22: np.ndarray  # Hess k(gamma', gamma')


def curvature_along(segment):
    m = segment.metric
    u, v = segment.pos[:, 0], segment.pos[:, 1]
    ku, kv, _ = m.kappa_grad(u, v)
    hu, huv, hv = m.kappa_hess(u, v)
    e, t = segment.frame, segment.vel

    def hess(a, b):
        return hu * a[:, 0] * b[:, 0] + huv * (a[:, 0] * b[:, 1] + a[:, 1] * b[:, 0]) + hv * a[:, 1] * b[:, 1]

    return CurvatureAlong(m.kappa(u, v), ku * e[:, 0] + kv * e[:, 1], ku * t[:, 0] + kv * t[:, 1],
                          m.kappa_lap(u, v), hess(e, e), hess(t, t))


@dataclass(eq=False)
class TwoPointData:
    segment: surface.GeodesicSegment
    basis: JacobiBasis
    curv: CurvatureAlong
    C: float
    D: float
    eps: float
    dC_e1_x: float
    dC_e1_y: float
    dC_e2_x: float
    dC_e2_y: float

    @property
    def d(self):
        return self.segment.d


def p_solution(basis, curv, form="derived"):
    """Normal second-variation component p: p'' + k p = -k1 J^m with zero boundary values.

    ``form="derived"`` uses m=2, the forcing produced by differentiating the
    curvature term along the variation; ``form="printed"`` uses m=1.
    """
    power = {"derived": 2, "printed": 1}[form]
    return solve_inhomogeneous(basis, -curv.k1 * basis.J ** power, 0.0, 0.0)


def q_linear(basis):
    s, d = basis.s, basis.d
    return ((d / 2 - s) * basis.dJ_left + (s + d / 2) * basis.dJ_right) / d


def remainder_D(basis, curv, p_form="derived"):
    """The second-derivative remainder D(x, y) (vanishes in constant curvature)."""
    J, dJ = basis.J, basis.dJ
    p = p_solution(basis, curv, p_form)
    q_tilde = q_linear(basis) + 3 * dJ * J
    integrand = 0.5 * J ** 2 * (curv.lap * J ** 2 + 3 * curv.k1 * p + curv.k2 * q_tilde)
    boundary = -basis.dJ01_left * (basis.dJ_right + basis.dJ_left) ** 2
    return float(boundary + simpson(integrand, x=basis.s))


def two_point_data(segment, p_form="derived"):
    basis = solve_jacobi_basis(segment)
    curv = curvature_along(segment)
    J = basis.J
    kx, ky = float(curv.kappa[0]), float(curv.kappa[-1])
    return TwoPointData(
        segment=segment, basis=basis, curv=curv, C=basis.C,
        D=remainder_D(basis, curv, p_form),
        eps=2.0 * (ky - kx),
        dC_e1_x=float(-0.5 * simpson(curv.k1 * basis.J10 * J ** 2, x=basis.s)),
        dC_e1_y=float(-0.5 * simpson(curv.k1 * basis.J01 * J ** 2, x=basis.s)),
        dC_e2_x=0.5 * (kx + basis.dJ_left ** 2),
        dC_e2_y=-0.5 * (ky + basis.dJ_right ** 2),
    )


def compute_C_derivatives(metric, x, y):
    return two_point_data(surface.geodesic_bvp(metric, x, y, check_unique=False))


def compute_D(metric, x, y, p_form="derived"):
    return two_point_data(surface.geodesic_bvp(metric, x, y, check_unique=False), p_form).D


def C_value(metric, x, y):
    return solve_jacobi_basis(surface.geodesic_bvp(metric, x, y, check_unique=False)).C


# closed forms for second derivatives of -C; used against finite differences

def hessian_E2E2_negC(t):
    """Second derivative of -C as x moves along gamma towards y and y moves towards x."""
    b, c = t.basis, t.curv
    a, z = b.dJ_left, b.dJ_right
    return (c.kappa[0] * a - c.kappa[-1] * z + 0.5 * (c.k2[-1] - c.k2[0]) + a ** 3 - z ** 3
            - b.dJ01_left * (z + a) ** 2)


def _endpoint_term(t, endpoint):
    """Second-variation term not captured by the integral.

    ``"printed"`` is C times the derivative of C when both ends slide outward along
    the geodesic.  ``"derived"`` accounts for the change of segment length,
    (2C/d)(int k J^2 + C); the two agree when the curvature is constant.
    """
    b, c = t.basis, t.curv
    if endpoint == "printed":
        return t.C * (t.dC_e2_x - t.dC_e2_y)
    if endpoint == "derived":
        return 2.0 * t.C / t.d * (simpson(c.kappa * b.J ** 2, x=b.s) + t.C)
    raise ValueError(f"unknown endpoint form {endpoint!r}")


def hessian_E1E1_negC(t, p_form="derived", endpoint="printed"):
    """Second derivative of -C as both endpoints move along geodesics tangent to e1."""
    b, c = t.basis, t.curv
    J = b.J
    p = p_solution(b, c, p_form)
    q = q_linear(b) - b.dJ * J
    integral = simpson(0.5 * J ** 2 * (c.k11 * J ** 2 + 3 * c.k1 * p + c.k2 * q), x=b.s)
    return float(integral + _endpoint_term(t, endpoint))


def combined_hessian_negC(t, endpoint="printed"):
    """(E1E1 + E2E2)(-C) written through D."""
    b, c = t.basis, t.curv
    a, z = b.dJ_left, b.dJ_right
    kx, ky = c.kappa[0], c.kappa[-1]
    return float(kx * a - ky * z + a ** 3 - z ** 3 + _endpoint_term(t, endpoint) + t.D)
