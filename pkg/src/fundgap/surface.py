"""Surface metrics in a chart, geodesics with a parallel normal frame, curvature statistics.

Metrics are built from symbolic coefficients so that curvature, its gradient,
Hessian and Laplacian are exact expressions compiled to numpy.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
import sympy as sp
from scipy.stats import qmc

from .errors import AmbiguousGeodesic, ChartExit, DomainError, NoConvergence, StepError

U, V = sp.symbols("u v", real=True)
_R = sp.Symbol("r", positive=True)

DEFAULT_STEPS = 1024


def _compile(exprs):
    exprs = [sp.sympify(e) for e in exprs]
    f = sp.lambdify((U, V), exprs, modules="numpy", cse=True)
    n = len(exprs)

    def fn(u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        out = np.empty((n,) + np.broadcast_shapes(u.shape, v.shape))
        for i, o in enumerate(f(u, v)):
            out[i] = o
        return out

    return fn


class SurfaceMetric:
    """A Riemannian metric g11 du^2 + 2 g12 du dv + g22 dv^2 on a coordinate rectangle.

    ``kappa`` may be given in closed form; otherwise it is derived from the
    Christoffel symbols. Everything downstream (gradient, Hessian, Laplacian
    of the curvature) is differentiated symbolically.
    """

    def __init__(self, g, chart_domain, family, kappa=None, simplify=False):
        self.family = family
        self.chart_domain = tuple(tuple(float(c) for c in side) for side in chart_domain)
        g11, g12, g22 = (sp.sympify(e) for e in g)
        G = sp.Matrix([[g11, g12], [g12, g22]])
        det = sp.together(g11 * g22 - g12 ** 2)
        Ginv = sp.Matrix([[g22, -g12], [-g12, g11]]) / det
        x = (U, V)
        gam = [[[None] * 2 for _ in range(2)] for _ in range(2)]
        for k in range(2):
            for i in range(2):
                for j in range(2):
                    e = sum(Ginv[k, l] * (sp.diff(G[l, j], x[i]) + sp.diff(G[l, i], x[j])
                                          - sp.diff(G[i, j], x[l])) for l in range(2)) / 2
                    gam[k][i][j] = sp.simplify(e) if simplify else e
        if kappa is None:
            # R^1_{212} lowered with g_{1a}, divided by det g
            R = []
            for a in range(2):
                e = (sp.diff(gam[a][1][1], U) - sp.diff(gam[a][0][1], V)
                     + sum(gam[a][0][m] * gam[m][1][1] - gam[a][1][m] * gam[m][0][1] for m in range(2)))
                R.append(e)
            kappa = (G[0, 0] * R[0] + G[0, 1] * R[1]) / det
            if simplify:
                kappa = sp.simplify(kappa)
        kappa = sp.sympify(kappa)
        dk = [sp.diff(kappa, U), sp.diff(kappa, V)]
        hess = [[sp.diff(dk[j], x[i]) - sum(gam[m][i][j] * dk[m] for m in range(2))
                 for j in range(2)] for i in range(2)]
        lap = sum(Ginv[i, j] * hess[i][j] for i in range(2) for j in range(2))
        grad_sq = sum(Ginv[i, j] * dk[i] * dk[j] for i in range(2) for j in range(2))

        self.symbols = {"g": (g11, g12, g22), "kappa": kappa}
        self._g = _compile([g11, g12, g22])
        self._gam = _compile([gam[0][0][0], gam[0][0][1], gam[0][1][1],
                              gam[1][0][0], gam[1][0][1], gam[1][1][1]])
        self._kappa = _compile([kappa])
        self._grad = _compile([dk[0], dk[1], grad_sq])
        self._hess = _compile([hess[0][0], hess[0][1], hess[1][1]])
        self._lap = _compile([lap])

    def __repr__(self):
        return f"SurfaceMetric({self.family})"

    # callables on chart coordinates; u, v may be arrays of any common shape
    def metric(self, u, v):
        return self._g(u, v)

    def christoffel(self, u, v):
        """(G1_11, G1_12, G1_22, G2_11, G2_12, G2_22)."""
        return self._gam(u, v)

    def kappa(self, u, v):
        return self._kappa(u, v)[0]

    def kappa_grad(self, u, v):
        """Returns (dk/du, dk/dv, |grad k|_g)."""
        ku, kv, sq = self._grad(u, v)
        return ku, kv, np.sqrt(np.maximum(sq, 0.0))

    def kappa_hess(self, u, v):
        """Covariant Hessian components (H_uu, H_uv, H_vv)."""
        return self._hess(u, v)

    def kappa_lap(self, u, v):
        return self._lap(u, v)[0]

    # pointwise linear algebra, points and vectors shaped (..., 2)
    def inner(self, p, a, b):
        p, a, b = np.asarray(p, float), np.asarray(a, float), np.asarray(b, float)
        g11, g12, g22 = self.metric(p[..., 0], p[..., 1])
        return g11 * a[..., 0] * b[..., 0] + g12 * (a[..., 0] * b[..., 1] + a[..., 1] * b[..., 0]) \
            + g22 * a[..., 1] * b[..., 1]

    def norm(self, p, a):
        return np.sqrt(self.inner(p, a, a))

    def inside(self, p):
        p = np.asarray(p, float)
        (u0, u1), (v0, v1) = self.chart_domain
        return (p[..., 0] > u0) & (p[..., 0] < u1) & (p[..., 1] > v0) & (p[..., 1] < v1)

    def unit_normal(self, p, v):
        """Unit vector perpendicular to v, positively oriented in the chart."""
        p, v = np.asarray(p, float), np.asarray(v, float)
        w = np.stack([-v[..., 1], v[..., 0]], axis=-1)
        vv = self.inner(p, v, v)
        w = w - (self.inner(p, w, v) / vv)[..., None] * v
        return w / self.norm(p, w)[..., None]

    def orthonormal_frame(self, p):
        p = np.asarray(p, float)
        e = np.zeros(p.shape)
        e[..., 0] = 1.0
        e1 = e / self.norm(p, e)[..., None]
        return e1, self.unit_normal(p, e1)


# ---------------------------------------------------------------- families

def flat(extent=1e3):
    return SurfaceMetric((1, 0, 1), ((-extent, extent), (-extent, extent)), "flat", kappa=0)


def round_sphere(R=1.0):
    """Sphere of radius R in the stereographic chart scaled to be isometric at the origin.

    The origin is the north pole; the equator is the circle of chart radius 2R.
    """
    R = sp.nsimplify(R)
    c = 1 / (1 + (U ** 2 + V ** 2) / (4 * R ** 2))
    ext = 6 * float(R)
    return SurfaceMetric((c ** 2, 0, c ** 2), ((-ext, ext), (-ext, ext)),
                         f"round_sphere(R={float(R):g})", kappa=1 / R ** 2)


def sphere_point(colat, lon, R=1.0):
    """Chart coordinates of the point with the given colatitude/longitude on round_sphere(R)."""
    rho = 2 * R * np.tan(np.asarray(colat, float) / 2)
    return np.stack([rho * np.cos(lon), rho * np.sin(lon)], axis=-1)


def sphere_ambient(p, R=1.0):
    p = np.asarray(p, float)
    rho = np.hypot(p[..., 0], p[..., 1])
    colat = 2 * np.arctan(rho / (2 * R))
    lon = np.arctan2(p[..., 1], p[..., 0])
    return R * np.stack([np.sin(colat) * np.cos(lon), np.sin(colat) * np.sin(lon), np.cos(colat)], axis=-1)


def rotsym(profile, r_range, theta_range=(-np.pi, np.pi), tag=None):
    """dr^2 + f(r)^2 dth^2 in the (r, theta) chart; ``profile`` is a sympy expression in ``r``.

    Keep r_range away from zeros of f: the chart is singular there.
    """
    f = sp.sympify(profile).subs(_R, U)
    kappa = sp.simplify(-sp.diff(f, U, 2) / f)
    tag = tag or f"rotsym(f={sp.sympify(profile)})"
    return SurfaceMetric((1, 0, f ** 2), (r_range, theta_range), tag, kappa=kappa)


def pinched_profile(amplitude):
    return sp.sin(_R) + sp.nsimplify(amplitude) * sp.sin(3 * _R) * sp.sin(_R) ** 2


def pinched_rotsym(amplitude=0.01, r_range=(0.05, 2.8)):
    return rotsym(pinched_profile(amplitude), r_range,
                  tag=f"rotsym(f=sin r + {amplitude:g} sin 3r sin^2 r)")


def conformal_sphere(phi, R=1.0):
    """exp(2 phi) times round_sphere(R); ``phi`` is a sympy expression in u, v."""
    R = sp.nsimplify(R)
    phi = sp.sympify(phi)
    c = 1 / (1 + (U ** 2 + V ** 2) / (4 * R ** 2))
    lap0 = sp.diff(phi, U, 2) + sp.diff(phi, V, 2)
    kappa = sp.exp(-2 * phi) * (1 / R ** 2 - lap0 / c ** 2)
    ext = 6 * float(R)
    return SurfaceMetric((sp.exp(2 * phi) * c ** 2, 0, sp.exp(2 * phi) * c ** 2),
                         ((-ext, ext), (-ext, ext)), f"conformal_sphere(u={phi})", kappa=kappa)


# ---------------------------------------------------------------- integration

def _rhs(metric, S, full):
    x, y, a, b = S[:, 0], S[:, 1], S[:, 2], S[:, 3]
    G = metric.christoffel(x, y)
    out = np.empty_like(S)
    out[:, 0] = a
    out[:, 1] = b
    out[:, 2] = -(G[0] * a * a + 2 * G[1] * a * b + G[2] * b * b)
    out[:, 3] = -(G[3] * a * a + 2 * G[4] * a * b + G[5] * b * b)
    if full:
        e, f = S[:, 4], S[:, 5]
        out[:, 4] = -(G[0] * a * e + G[1] * (a * f + b * e) + G[2] * b * f)
        out[:, 5] = -(G[3] * a * e + G[4] * (a * f + b * e) + G[5] * b * f)
        k = metric.kappa(x, y)
        out[:, 6] = S[:, 7]
        out[:, 7] = -k * S[:, 6]
        out[:, 8] = S[:, 9]
        out[:, 9] = -k * S[:, 8]
    return out


def _rk4(metric, S0, h, steps, full, record):
    """Classical RK4 with per-trajectory step h (shape (B,)).

    Returns the final state, the recorded trajectory (steps+1, B, ncomp) or
    None, and a mask of trajectories that left the chart at some step.
    """
    S = np.array(S0, dtype=float)
    hb = np.asarray(h, float)[:, None]
    traj = np.empty((steps + 1,) + S.shape) if record else None
    if record:
        traj[0] = S
    exited = ~metric.inside(S[:, :2])
    with np.errstate(all="ignore"):
        for i in range(steps):
            k1 = _rhs(metric, S, full)
            k2 = _rhs(metric, S + 0.5 * hb * k1, full)
            k3 = _rhs(metric, S + 0.5 * hb * k2, full)
            k4 = _rhs(metric, S + hb * k3, full)
            S = S + hb / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            exited |= ~metric.inside(S[:, :2])
            if record:
                traj[i + 1] = S
    return S, traj, exited


@dataclass(eq=False)
class GeodesicSegment:
    """Unit-speed geodesic sampled on s_i in [-d/2, d/2].

    ``fundamental`` holds (Y1, Y1', Y2, Y2') with Y1(-d/2)=1, Y1'=0 and
    Y2(-d/2)=0, Y2'=1, integrated alongside the geodesic so that the
    curvature is sampled at the same RK4 stages.
    """
    metric: SurfaceMetric
    x: np.ndarray
    y: np.ndarray
    d: float
    s: np.ndarray
    pos: np.ndarray
    vel: np.ndarray
    frame: np.ndarray
    fundamental: np.ndarray

    @property
    def steps(self):
        return len(self.s) - 1

    def reversed(self):
        """The same geodesic traversed from y to x (re-integrated from y)."""
        return segments_from(self.metric, self.y[None], -self.vel[-1][None], np.array([self.d]),
                             self.steps)[0]

    def with_flipped_frame(self):
        return replace(self, frame=-self.frame)


def segments_from(metric, ps, vs, lengths, steps=DEFAULT_STEPS):
    """Integrate unit-speed geodesics from points ps with unit directions vs (batched)."""
    ps = np.atleast_2d(np.asarray(ps, float))
    vs = np.atleast_2d(np.asarray(vs, float))
    lengths = np.atleast_1d(np.asarray(lengths, float))
    B = len(ps)
    S0 = np.zeros((B, 10))
    S0[:, 0:2] = ps
    S0[:, 2:4] = vs
    S0[:, 4:6] = metric.unit_normal(ps, vs)
    S0[:, 6] = 1.0
    S0[:, 9] = 1.0
    _, traj, exited = _rk4(metric, S0, lengths / steps, steps, full=True, record=True)
    if exited.any():
        raise ChartExit(f"{int(exited.sum())} geodesic(s) left the chart {metric.chart_domain}")
    segs = []
    for b in range(B):
        d = float(lengths[b])
        T = traj[:, b, :]
        segs.append(GeodesicSegment(metric, ps[b].copy(), T[-1, 0:2].copy(), d,
                                    np.linspace(-d / 2, d / 2, steps + 1),
                                    T[:, 0:2].copy(), T[:, 2:4].copy(), T[:, 4:6].copy(),
                                    T[:, 6:10].copy()))
    return segs


def geodesic_ivp(metric, p, v, length, steps=DEFAULT_STEPS, tol=1e-8):
    """Geodesic from p with unit initial velocity v, as a segment on [-length/2, length/2].

    The endpoint is compared against a half-step-count run; the Richardson
    estimate |fine - coarse|/15 must stay below ``tol``.
    """
    p = np.asarray(p, float)
    v = np.asarray(v, float)
    speed = float(metric.norm(p, v))
    if abs(speed - 1.0) > 1e-10:
        raise DomainError(f"initial velocity must be unit, |v|_g = {speed!r}")
    if not length > 0:
        raise DomainError("length must be positive")
    seg = segments_from(metric, p[None], v[None], np.array([float(length)]), steps)[0]
    coarse = shoot(metric, p[None], (v * length)[None], steps // 2)[0]
    err = np.max(np.abs(seg.y - coarse)) / 15.0
    if not err <= tol:
        raise StepError(f"RK4 Richardson error estimate {err:.3g} exceeds {tol:.3g}")
    return seg


def shoot_state(metric, ps, ws, steps=DEFAULT_STEPS, on_exit="raise"):
    """Position and velocity at parameter 1 of geodesics with initial velocity ws (any speed)."""
    ps = np.atleast_2d(np.asarray(ps, float))
    ws = np.atleast_2d(np.asarray(ws, float))
    S0 = np.concatenate([ps, ws], axis=1)
    S, _, exited = _rk4(metric, S0, np.full(len(ps), 1.0 / steps), steps, full=False, record=False)
    if exited.any():
        if on_exit == "raise":
            raise ChartExit(f"{int(exited.sum())} geodesic(s) left the chart {metric.chart_domain}")
        S[exited] = np.nan
    return S[:, :2], S[:, 2:4]


def shoot(metric, ps, ws, steps=DEFAULT_STEPS, on_exit="raise"):
    """Endpoints at parameter 1 of the geodesics with initial velocity ws (any speed)."""
    return shoot_state(metric, ps, ws, steps, on_exit)[0]


def exp_map(metric, p, vectors, steps=128):
    """exp_p of tangent vectors given in the orthonormal frame at p, shape (B, 2)."""
    p = np.asarray(p, float)
    vectors = np.atleast_2d(np.asarray(vectors, float))
    e1, e2 = metric.orthonormal_frame(p)
    ws = vectors[:, :1] * e1 + vectors[:, 1:2] * e2
    return shoot(metric, np.broadcast_to(p, ws.shape), ws, steps)


def _newton_shots(metric, xs, ys, steps, tol, maxiter, w0=None):
    B = len(xs)
    w = (ys - xs).copy() if w0 is None else np.array(w0, float)
    scale = np.maximum(1.0, np.abs(ys).max(axis=1))
    resid = np.full(B, np.inf)
    active = np.ones(B, bool)
    for _ in range(maxiter):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        n = idx.size
        x, ww = xs[idx], w[idx]
        eps = 1e-7 * np.maximum(1.0, np.abs(ww).max(axis=1))
        du = np.zeros_like(ww)
        du[:, 0] = eps
        dv = np.zeros_like(ww)
        dv[:, 1] = eps
        E = shoot(metric, np.concatenate([x, x, x]), np.concatenate([ww, ww + du, ww + dv]),
                  steps, on_exit="nan")
        F = E[:n] - ys[idx]
        bad = ~np.isfinite(F).all(axis=1)
        if bad.any():
            raise ChartExit("shooting iterate left the chart")
        Jm = np.stack([(E[n:2 * n] - E[:n]) / eps[:, None], (E[2 * n:] - E[:n]) / eps[:, None]], axis=-1)
        r = np.abs(F).max(axis=1)
        improved = r < resid[idx]
        resid[idx] = np.minimum(r, resid[idx])
        step = np.linalg.solve(Jm, -F[..., None])[..., 0]
        # damp wild steps
        big = np.abs(step).max(axis=1) > 0.5 * np.maximum(np.abs(ww).max(axis=1), 1e-300)
        step[big] *= (0.5 * np.abs(ww[big]).max(axis=1) / np.abs(step[big]).max(axis=1))[:, None]
        done = (r <= 1e-13 * scale[idx]) | ~improved
        upd = ~done
        w[idx[upd]] += step[upd]
        active[idx[done]] = False
    if np.any(resid > tol * scale):
        worst = int(np.argmax(resid / scale))
        raise NoConvergence(f"shooting residual {resid[worst]:.3g} after {maxiter} iterations "
                            f"for pair {worst}")
    return w


def geodesic_bvp_many(metric, xs, ys, steps=DEFAULT_STEPS, tol=1e-10, maxiter=50):
    """Batched shooting; returns one GeodesicSegment per pair."""
    xs = np.atleast_2d(np.asarray(xs, float))
    ys = np.atleast_2d(np.asarray(ys, float))
    if np.any(np.all(xs == ys, axis=1)):
        raise DomainError("x and y must differ")
    w = _newton_shots(metric, xs, ys, steps, tol, maxiter)
    d = metric.norm(xs, w)
    return segments_from(metric, xs, w / d[:, None], d, steps)


def geodesic_bvp(metric, x, y, steps=DEFAULT_STEPS, tol=1e-10, maxiter=50, check_unique=True):
    """Minimizing geodesic from x to y by Newton shooting from the chart straight line.

    With ``check_unique`` the problem is also shot from y back to x; two
    distinct solutions of equal length raise AmbiguousGeodesic.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    seg = geodesic_bvp_many(metric, x[None], y[None], steps, tol, maxiter)[0]
    if not check_unique:
        return seg
    back = geodesic_bvp_many(metric, y[None], x[None], steps, tol, maxiter)[0]
    same = np.max(np.abs(back.vel[-1] + seg.vel[0])) < 1e-6
    if same:
        return seg
    if abs(back.d - seg.d) <= 1e-8 * max(1.0, seg.d):
        raise AmbiguousGeodesic(f"two geodesics of length {seg.d:.12g} join {x} and {y}")
    return seg if seg.d < back.d else back.reversed()


def distance(metric, x, y):
    return geodesic_bvp(metric, x, y, check_unique=False).d


# ---------------------------------------------------------------- regions and statistics

@dataclass(frozen=True)
class ChartRect:
    u_range: tuple
    v_range: tuple

    def sample(self, metric, n, seed=0):
        pts = qmc.Halton(d=2, scramble=True, seed=seed).random(n)
        lo = np.array([self.u_range[0], self.v_range[0]])
        hi = np.array([self.u_range[1], self.v_range[1]])
        return lo + pts * (hi - lo)


@dataclass(frozen=True)
class GeodesicBall:
    center: tuple
    radius: float

    def polar_to_chart(self, metric, r, theta, steps=128):
        vec = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)
        return exp_map(metric, np.asarray(self.center, float), vec, steps)

    def sample(self, metric, n, seed=0):
        q = qmc.Halton(d=2, scramble=True, seed=seed).random(n)
        r = self.radius * np.sqrt(q[:, 0])
        th = 2 * np.pi * q[:, 1]
        # always include the center and a boundary ring
        ring = np.linspace(0, 2 * np.pi, 64, endpoint=False)
        r = np.concatenate([[0.0], r, np.full(64, self.radius)])
        th = np.concatenate([[0.0], th, ring])
        return self.polar_to_chart(metric, r, th)


class CurvatureStats(NamedTuple):
    kappa_lo: float
    kappa_hi: float
    grad_sup: float
    lap_inf_neg: float


def curvature_stats(metric, region, samples=4096, seed=0):
    """Sampled min/max of curvature, sup |grad k|_g and max(0, -inf Lap k) over a region."""
    if samples < 100:
        raise DomainError("need at least 100 samples")
    if isinstance(region, (tuple, list)):
        region = ChartRect(tuple(region[0]), tuple(region[1]))
    p = region.sample(metric, samples, seed)
    k = metric.kappa(p[:, 0], p[:, 1])
    g = metric.kappa_grad(p[:, 0], p[:, 1])[2]
    lap = metric.kappa_lap(p[:, 0], p[:, 1])
    return CurvatureStats(float(k.min()), float(k.max()), float(g.max()), float(max(0.0, -lap.min())))
