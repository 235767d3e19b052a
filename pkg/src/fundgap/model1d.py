"""One-dimensional drift eigenproblem phi'' - 4 b(s) phi' = -lambda phi on [-D/2, D/2].

The drift is b = tn(k_hi) - tn(k_lo). Its first Dirichlet eigenpair gives the
log-derivative psi = phi'/phi that bounds two-point concavity, and the
effective length L = pi / sqrt(lambda1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .comparison import tn
from .errors import BracketFail, DomainError, HypothesisFail

PINCH_LIMIT = (8 + 4 * math.pi) / (3 + 4 * math.pi)



def _check_params(k_lo, k_hi, D):
    if not (0 < k_lo <= k_hi):
        raise DomainError(f"need 0 < k_lo <= k_hi, got {k_lo}, {k_hi}")
    if not (0 < D <= math.pi / (2 * math.sqrt(k_hi)) * (1 + 1e-14)):
        raise DomainError(f"D={D} outside (0, pi/(2 sqrt(k_hi))]")


def drift(k_lo, k_hi, s):
    return tn(k_hi, s) - tn(k_lo, s)


def drift_slope(k_lo, k_hi, s):
    return k_hi + tn(k_hi, s) ** 2 - k_lo - tn(k_lo, s) ** 2


def schrodinger_potential(k_lo, k_hi, s):
    """Potential of the unitarily equivalent operator -f'' + V f."""
    b = drift(k_lo, k_hi, s)
    return 4 * b ** 2 - 2 * (tn(k_hi, s) ** 2 - tn(k_lo, s) ** 2 + k_hi - k_lo)


class _Shooter:
    """RK4 for y'' = a(s) y' + (c(s) - lam) y from y(0)=1, y'(0)=0 on a fixed grid."""

    def __init__(self, a_fn, c_fn, half_length, steps, substeps=4):
        # psi is read within a few steps of its pole, where the O(h^4) phase error of
        # the shooting is amplified; integrating on a finer grid keeps it negligible
        self.sub = substeps
        self.steps = steps * substeps
        self.h = half_length / self.steps
        nodes = np.arange(self.steps + 1) * self.h
        mids = nodes[:-1] + self.h / 2
        self.a0 = [float(x) for x in a_fn(nodes)]
        self.c0 = [float(x) for x in c_fn(nodes)]
        self.am = [float(x) for x in a_fn(mids)]
        self.cm = [float(x) for x in c_fn(mids)]

    def run(self, lam, record=False):
        h = self.h
        h2, h6 = h / 2, h / 6
        a0, c0, am, cm = self.a0, self.c0, self.am, self.cm
        y, z = 1.0, 0.0
        ys, zs = ([y], [z]) if record else (None, None)
        for i in range(self.steps):
            aa, ca = a0[i], c0[i] - lam
            ab, cb = am[i], cm[i] - lam
            ac, cc = a0[i + 1], c0[i + 1] - lam
            k1y, k1z = z, aa * z + ca * y
            y2, z2 = y + h2 * k1y, z + h2 * k1z
            k2y, k2z = z2, ab * z2 + cb * y2
            y3, z3 = y + h2 * k2y, z + h2 * k2z
            k3y, k3z = z3, ab * z3 + cb * y3
            y4, z4 = y + h * k3y, z + h * k3z
            k4y, k4z = z4, ac * z4 + cc * y4
            y += h6 * (k1y + 2 * k2y + 2 * k3y + k4y)
            z += h6 * (k1z + 2 * k2z + 2 * k3z + k4z)
            if record and (i + 1) % self.sub == 0:
                ys.append(y)
                zs.append(z)
        if record:
            return np.array(ys), np.array(zs)
        return y


def _first_eigenvalue(shooter, D):
    """Smallest lam where the even solution vanishes at D/2: bisection then two secant steps."""
    scale = math.pi ** 2 / D ** 2
    lo, hi = 0.0, 4 * scale
    f_lo, f_hi = shooter.run(lo), shooter.run(hi)
    if not (f_lo > 0 > f_hi):
        raise BracketFail(f"no sign change of the boundary value on (0, {hi:.6g}]: {f_lo:.3g}, {f_hi:.3g}")
    while hi - lo > 1e-12 * scale:
        mid = 0.5 * (lo + hi)
        f_mid = shooter.run(mid)
        if f_mid > 0:
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    a, fa, b, fb = lo, f_lo, hi, f_hi
    for _ in range(2):
        if fb == fa:
            break
        c = b - fb * (b - a) / (fb - fa)
        a, fa, b, fb = b, fb, c, shooter.run(c)
    return b


@dataclass(eq=False)
class Model1DSolution:
    kappa_lo: float
    kappa_hi: float
    D: float
    lambda1: float
    s: np.ndarray          # full grid on [-D/2, D/2]
    phi: np.ndarray
    dphi: np.ndarray
    s_psi: np.ndarray      # [0, D/2 - 10 h]
    psi: np.ndarray
    L: float
    _splines: tuple = field(default=None, repr=False)

    @property
    def h(self):
        return float(self.s[1] - self.s[0])

    def _half(self):
        n = (len(self.s) - 1) // 2
        return self.s[n:], self.phi[n:], self.dphi[n:]

    def ddphi(self, s, phi, dphi):
        return 4 * drift(self.kappa_lo, self.kappa_hi, s) * dphi - self.lambda1 * phi

    def psi_at(self, s):
        """psi at arbitrary points of [0, D/2) (Hermite interpolation of phi and phi')."""
        if self._splines is None:
            hs, hp, hd = self._half()
            self._splines = (CubicHermiteSpline(hs, hp, hd),
                             CubicHermiteSpline(hs, hd, self.ddphi(hs, hp, hd)))
        s = np.asarray(s, float)
        if np.any(s < 0) or np.any(s >= self.D / 2):
            raise DomainError("psi is defined on [0, D/2)")
        f, df = self._splines
        out = df(s) / f(s)
        return float(out) if out.ndim == 0 else out

    def dpsi(self, s=None, psi=None):
        s = self.s_psi if s is None else np.asarray(s, float)
        psi = self.psi if psi is None else psi
        return 4 * drift(self.kappa_lo, self.kappa_hi, s) * psi - self.lambda1 - psi ** 2

    def ddpsi(self, s=None, psi=None):
        s = self.s_psi if s is None else np.asarray(s, float)
        psi = self.psi if psi is None else psi
        dp = self.dpsi(s, psi)
        b = drift(self.kappa_lo, self.kappa_hi, s)
        return 4 * drift_slope(self.kappa_lo, self.kappa_hi, s) * psi + 4 * b * dp - 2 * psi * dp


def solve_model(k_lo, k_hi, D, grid_n=1024):
    _check_params(k_lo, k_hi, D)
    if grid_n % 2 or grid_n < 256:
        raise DomainError("grid_n must be even and >= 256")
    half = grid_n // 2
    shooter = _Shooter(lambda s: 4 * drift(k_lo, k_hi, s), lambda s: 0.0 * s, D / 2, half)
    lam = _first_eigenvalue(shooter, D)
    y, z = shooter.run(lam, record=True)
    s = np.linspace(-D / 2, D / 2, grid_n + 1)
    phi = np.concatenate([y[:0:-1], y])
    dphi = np.concatenate([-z[:0:-1], z])
    h = D / grid_n
    keep = int(np.floor((D / 2 - 10 * h) / h + 1e-9))
    s_psi = np.arange(keep + 1) * h
    psi = z[:keep + 1] / y[:keep + 1]
    return Model1DSolution(k_lo, k_hi, D, lam, s, phi, dphi, s_psi, psi, math.pi / math.sqrt(lam))


def solve_model_schrodinger(k_lo, k_hi, D, grid_n=1024):
    """First eigenvalue from the potential form; same shooting code, no drift."""
    _check_params(k_lo, k_hi, D)
    shooter = _Shooter(lambda s: 0.0 * s, lambda s: schrodinger_potential(k_lo, k_hi, s),
                       D / 2, grid_n // 2)
    return _first_eigenvalue(shooter, D)


def eigen_lower_bound(k_lo, k_hi, D):
    return math.pi ** 2 / D ** 2 - (4 + math.pi) * (k_hi - k_lo)


@dataclass
class PsiReport:
    """Each value is the left-hand side of an inequality that should be <= 0 (or = 0 for psi(0))."""
    values: dict
    ok: dict
    phi_decreasing: bool
    psi_decreasing: bool
    endpoint_slope: float

    @property
    def passed(self):
        return all(self.ok.values()) and self.phi_decreasing and self.psi_decreasing and self.endpoint_slope < 0


def check_psi_inequalities(sol, slack=1e-6):
    k_lo, k_hi, D, lam = sol.kappa_lo, sol.kappa_hi, sol.D, sol.lambda1
    if not k_hi < PINCH_LIMIT * k_lo:
        raise HypothesisFail(f"pinching: k_hi/k_lo = {k_hi / k_lo:.6g} is not below {PINCH_LIMIT:.6g}")
    if D > math.pi / (2 * math.sqrt(k_hi)) * (1 + 1e-14):
        raise HypothesisFail(f"diameter: D = {D:.6g} exceeds pi/(2 sqrt(k_hi))")
    s, psi = sol.s_psi, sol.psi
    dpsi, ddpsi = sol.dpsi(), sol.ddpsi()
    tl, th = tn(k_lo, s), tn(k_hi, s)
    pinch = k_hi - k_lo
    first = (ddpsi + 2 * psi * dpsi - 2 * tl * (dpsi + psi ** 2 + lam)
             - 2 * psi * pinch - 4 * dpsi * (th - tl))
    second = -2 * pinch + 2 * dpsi - 4 * tl * psi - 2 * tl ** 2 + 2 * tl * th
    values = {
        "i": float(np.max(first)),
        "ii": float(np.max(second)),
        "iii": float(dpsi[0] + k_lo / 2),
        "iv": float(np.max(dpsi)),
        "v": float(abs(psi[0])),
    }
    ok = {
        "i": values["i"] <= slack,
        "ii": values["ii"] <= slack,
        "iii": values["iii"] < 0,
        "iv": values["iv"] <= slack,
        "v": values["v"] <= slack,
    }
    n = (len(sol.s) - 1) // 2
    half_phi = sol.phi[n:]
    return PsiReport(values, ok,
                     phi_decreasing=bool(np.all(np.diff(half_phi) < 0)),
                     psi_decreasing=bool(np.all(np.diff(psi) < 0)),
                     endpoint_slope=float(sol.dphi[-1]))


def comparison_psi(L, s):
    """Log-derivative of cos(pi s / L): solves psi' + psi^2 + (pi/L)^2 = 0, psi(0) = 0."""
    return -(math.pi / L) * np.tan(math.pi * np.asarray(s, float) / L)


@dataclass
class RiccatiReport:
    max_violation: float
    L: float
    ok: bool


def riccati_compare(sol, tol=1e-7):
    diff = sol.psi - comparison_psi(sol.L, sol.s_psi)
    worst = float(np.max(diff))
    return RiccatiReport(worst, sol.L, worst <= tol)
