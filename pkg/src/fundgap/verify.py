"""Hypothesis gates, gap lower bounds and sampled certification of the two-point estimates."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from . import jacobi, spectral2d, surface
from .comparison import tn
from .errors import HypothesisFail
from .model1d import PINCH_LIMIT, comparison_psi

SQRT2 = math.sqrt(2.0)
SQRT8 = math.sqrt(8.0)


# ---------------------------------------------------------------- hypotheses

def _pinch_terms(k_lo, k_hi):
    """Curvature-only terms shared by both displayed conditions (without the leading -k_hi/2 part)."""
    dk = k_hi - k_lo
    return dk * (0.5 + math.pi / 4) + SQRT2 * k_hi * (dk / k_lo) ** 2 * (4 * k_hi / (math.pi * math.sqrt(k_lo)) + 1) ** 2


def _derivative_terms(k_lo, k_hi, grad_sup, lap_inf_neg):
    return (2 / k_lo * lap_inf_neg + (1 / k_lo ** 2 + 3 * math.pi ** 2 * SQRT8 / (4 * k_hi * k_lo)) * grad_sup ** 2
            + 4 * math.pi / k_lo * grad_sup)


def curvature_condition(stats):
    """Left side of the curvature hypothesis (must be negative)."""
    k_lo, k_hi, g, lap = stats
    if k_lo <= 0:
        return math.inf
    return -0.5 * k_hi + _pinch_terms(k_lo, k_hi) + _derivative_terms(k_lo, k_hi, g, lap)


def eigenvalue_condition(stats, lam):
    """Left side of the variant hypothesis in which the domain eigenvalue appears (must be negative)."""
    k_lo, k_hi, g, lap = stats
    if k_lo <= 0:
        return math.inf
    return -2 * lam + 1.5 * k_hi + _pinch_terms(k_lo, k_hi) + _derivative_terms(k_lo, k_hi, g, lap)


@dataclass
class HypothesisReport:
    kappa_lo: float
    kappa_hi: float
    grad_sup: float
    lap_inf_neg: float
    D: float
    lambda1: float | None
    pinching_margin: float
    diameter_margin: float
    curvature_condition_value: float
    thm37_condition_value: float | None
    notes: list = field(default_factory=list)

    @property
    def pinching_ok(self):
        return self.pinching_margin > 0

    @property
    def diameter_ok(self):
        return self.diameter_margin > 0

    @property
    def curvature_condition_ok(self):
        return self.curvature_condition_value < 0

    @property
    def thm37_ok(self):
        return self.thm37_condition_value is not None and self.thm37_condition_value < 0

    @property
    def passed(self):
        return self.pinching_ok and self.diameter_ok and self.curvature_condition_ok

    def as_dict(self):
        return {
            "kappa_lo": self.kappa_lo, "kappa_hi": self.kappa_hi, "grad_sup": self.grad_sup,
            "lap_inf_neg": self.lap_inf_neg, "D": self.D, "lambda1": self.lambda1,
            "pinching_margin": self.pinching_margin, "pinching_ok": self.pinching_ok,
            "diameter_margin": self.diameter_margin, "diameter_ok": self.diameter_ok,
            "curvature_condition_value": self.curvature_condition_value,
            "curvature_condition_ok": self.curvature_condition_ok,
            "thm37_condition_value": self.thm37_condition_value, "thm37_ok": self.thm37_ok,
            "notes": list(self.notes),
        }


def check_hypotheses(stats, D, lambda1=None):
    stats = surface.CurvatureStats(*stats)
    k_lo, k_hi = stats.kappa_lo, stats.kappa_hi
    diam_limit = math.pi / (2 * math.sqrt(k_hi)) if k_hi > 0 else math.inf
    report = HypothesisReport(
        k_lo, k_hi, stats.grad_sup, stats.lap_inf_neg, D, lambda1,
        pinching_margin=PINCH_LIMIT * k_lo - k_hi,
        diameter_margin=diam_limit - D,
        curvature_condition_value=curvature_condition(stats),
        thm37_condition_value=None if lambda1 is None else eigenvalue_condition(stats, lambda1),
    )
    if k_lo <= 0:
        report.notes.append("lower curvature bound not positive: conditions undefined, reported as +inf")
    if lambda1 is not None:
        report.notes.append("eigenvalue condition evaluated a posteriori with the computed lambda1")
    return report


# ---------------------------------------------------------------- gap bounds

def gap_lower_bound(D, k_lo, k_hi):
    return 3 * math.pi ** 2 / D ** 2 - (12 + 3 * math.pi) * (k_hi - k_lo)


def gap_lower_bound_sharp(sol):
    return 3 * math.pi ** 2 / sol.L ** 2


# ---------------------------------------------------------------- pair sampling

def _interior_points(metric, domain, n, margin, seed, dim_offset=0):
    """n quasi-random points at least ``margin`` inside the domain (chart points)."""
    sampler = qmc.Halton(d=2 * (dim_offset + 1), scramble=True, seed=seed)
    if domain.kind == "geodesic_ball":
        q = sampler.random(n)[:, 2 * dim_offset:2 * dim_offset + 2]
        r = (domain.radius - margin) * np.sqrt(q[:, 0])
        th = 2 * np.pi * q[:, 1]
        return surface.GeodesicBall(domain.center, domain.radius).polar_to_chart(metric, r, th)
    b = domain.boundary_points(metric, 512)
    lo, hi = b.min(0), b.max(0)
    closed = np.vstack([b, b[:1]])
    e = np.diff(closed, axis=0)
    nrm = np.stack([e[:, 1], -e[:, 0]], -1) / np.linalg.norm(e, axis=1)[:, None]
    if np.sum(closed[:-1, 0] * closed[1:, 1] - closed[1:, 0] * closed[:-1, 1]) < 0:
        nrm = -nrm
    off = np.sum(nrm * closed[:-1], axis=1)
    out = []
    while sum(len(o) for o in out) < n:
        q = lo + sampler.random(4 * n)[:, 2 * dim_offset:2 * dim_offset + 2] * (hi - lo)
        g = np.stack([metric.norm(q, np.broadcast_to(nv, q.shape)) for nv in nrm[:: max(len(nrm) // 64, 1)]], 0)
        clear = np.min(off[None, :] - q @ nrm.T, axis=1) / np.max(g, axis=0)
        out.append(q[clear >= margin])
    return np.concatenate(out)[:n]


def sample_pairs(metric, domain, n, margin, D, seed=0, min_frac=0.05, steps=256):
    """Quasi-random interior pairs with mutual distance >= min_frac * D, solved as geodesic segments."""
    inner = margin * 1.1
    segs = []
    tried = 0
    batch = n
    while len(segs) < n:
        k = int(1.5 * batch) + 8
        xs = _interior_points(metric, domain, tried + k, inner, seed, 0)[tried:]
        ys = _interior_points(metric, domain, tried + k, inner, seed, 1)[tried:]
        tried += k
        keep = np.any(xs != ys, axis=1)
        cand = surface.geodesic_bvp_many(metric, xs[keep], ys[keep], steps=steps)
        segs += [s for s in cand if s.d >= min_frac * D]
        batch = n - len(segs)
    return segs[:n]


# ---------------------------------------------------------------- two-point log-concavity

@dataclass
class PairRecord:
    x: np.ndarray
    y: np.ndarray
    d: float
    lhs: float
    rhs_moc: float
    rhs_derived: float
    rhs_printed: float
    tau: float

    def rhs(self, form):
        return {"derived": self.rhs_derived, "printed": self.rhs_printed, "moc": self.rhs_moc}[form]

    def slack(self, form="derived"):
        """rhs - lhs: negative values are violations before the discretization allowance."""
        return self.rhs(form) - self.lhs


@dataclass
class TwoPointReport:
    pairs_tested: int
    form_used: str
    records: list
    certified: bool
    watermark: str = ""

    def excess(self, form=None):
        form = form or self.form_used
        return np.array([r.lhs - r.rhs(form) - r.tau for r in self.records])

    @property
    def worst_Z(self):
        return float(max(r.lhs - r.rhs(self.form_used) for r in self.records))

    @property
    def worst_pair(self):
        i = int(np.argmax([r.lhs - r.rhs(self.form_used) for r in self.records]))
        return self.records[i].x, self.records[i].y

    @property
    def worst_slack(self):
        return float(min(r.slack(self.form_used) for r in self.records))

    def passed(self, form=None):
        return bool(np.all(self.excess(form) <= 0))


def discretization_allowance(spectral, d, factor=10.0):
    return factor * (spectral.err_est / spectral.lambda1) * (1 + 1 / d)


def two_point_lhs(spectral, seg, margin=None):
    """<grad w(y), gamma'(d/2)> - <grad w(x), gamma'(-d/2)> with w = log u1."""
    dwx = spectral2d.log_differential(spectral, seg.pos[0], margin)
    dwy = spectral2d.log_differential(spectral, seg.pos[-1], margin)
    return float(dwy @ seg.vel[-1] - dwx @ seg.vel[0])


def verify_Z(metric, spectral, sol, domain, n_pairs, margin, stats=None, form="derived",
             seed=0, exploratory=False, segments=None):
    """Sampled check of the two-point log-concavity estimate.

    ``stats`` defaults to curvature statistics over the domain. If the
    hypotheses fail the check raises HypothesisFail unless ``exploratory``,
    in which case the report is watermarked NOT-CERTIFIED.
    """
    if stats is None:
        stats = _domain_stats(metric, domain)
    hyp = check_hypotheses(stats, sol.D)
    watermark = ""
    if not hyp.passed:
        if not exploratory:
            raise HypothesisFail(f"hypotheses not met: {hyp.as_dict()}")
        watermark = "NOT-CERTIFIED"
    k_lo = stats[0]
    segs = segments if segments is not None else sample_pairs(metric, domain, n_pairs, margin, sol.D, seed)
    records = []
    for seg in segs:
        d = seg.d
        half = d / 2
        t_lo = float(tn(k_lo, half))
        lhs = two_point_lhs(spectral, seg, margin)
        records.append(PairRecord(
            seg.x, seg.y, d, lhs,
            rhs_moc=2 * sol.psi_at(half) + t_lo,
            rhs_derived=2 * float(comparison_psi(sol.L, half)) + t_lo,
            rhs_printed=-(math.pi / sol.L) * math.tan(math.pi * d / sol.L) + t_lo,
            tau=discretization_allowance(spectral, d)))
    report = TwoPointReport(len(records), form, records, certified=False, watermark=watermark)
    report.certified = not watermark and report.passed()
    return report


def _domain_stats(metric, domain, samples=4096):
    if domain.kind == "geodesic_ball":
        region = surface.GeodesicBall(domain.center, domain.radius)
    else:
        b = domain.boundary
        region = surface.ChartRect((b[:, 0].min(), b[:, 0].max()), (b[:, 1].min(), b[:, 1].max()))
    return surface.curvature_stats(metric, region, samples)


# ---------------------------------------------------------------- one-point Hessian

@dataclass
class HessianReport:
    points: np.ndarray
    values: np.ndarray      # (n_points, n_directions) second differences of log u1
    bound: np.ndarray       # -kappa(p)/2 per point
    tau: float

    @property
    def worst_excess(self):
        return float(np.max(self.values - self.bound[:, None]))

    @property
    def passed(self):
        return self.worst_excess <= self.tau


def verify_hessian_onepoint(metric, spectral, n_points, directions=8, seed=0, margin=None):
    domain = spectral.domain
    margin = domain.margin if margin is None else margin
    step = 2 * spectral.mesh.h
    pts = _interior_points(metric, domain, n_points, margin + step, seed)
    ang = np.pi * np.arange(directions) / directions
    vecs = np.stack([np.cos(ang), np.sin(ang)], -1)
    vals = np.empty((len(pts), directions))
    for i, p in enumerate(pts):
        plus = surface.exp_map(metric, p, step * vecs)
        minus = surface.exp_map(metric, p, -step * vecs)
        w0 = math.log(spectral2d.value_at(spectral, p))
        for j in range(directions):
            wp = math.log(spectral2d.value_at(spectral, plus[j]))
            wm = math.log(spectral2d.value_at(spectral, minus[j]))
            vals[i, j] = (wp - 2 * w0 + wm) / step ** 2
    bound = -0.5 * metric.kappa(pts[:, 0], pts[:, 1])
    tau = discretization_allowance(spectral, step)
    return HessianReport(pts, vals, bound, tau)


# ---------------------------------------------------------------- remainder certification

@dataclass
class RemainderReport:
    d: np.ndarray
    D_slack: np.ndarray
    eps_slack: np.ndarray
    combined_slack: np.ndarray

    @property
    def min_slacks(self):
        return {"D": float(self.D_slack.min()), "eps": float(self.eps_slack.min()),
                "combined": float(self.combined_slack.min())}

    def passed(self, tol=1e-8):
        return all(v >= -tol for v in self.min_slacks.values())


def remainder_slacks(t, stats, lam=0.0):
    """Slacks (>= 0 when the estimate holds) of the three remainder estimates for one pair."""
    k_lo, k_hi, g, lap = stats
    C, d = t.C, t.d
    dk = k_hi - k_lo
    bracket_D = (2 * lap / k_lo + 3 * math.pi ** 2 * SQRT8 * g ** 2 / (4 * k_hi * k_lo)
                 + 4 * math.pi * g / k_lo + 2 * SQRT2 * k_hi ** 2 * dk ** 2 / k_lo)
    D_slack = t.D - 2 * C * bracket_D
    t_lo, t_hi = float(tn(k_lo, d / 2)), float(tn(k_hi, d / 2))
    eps_term = -t.eps ** 2 / (8 * t_lo)
    eps_slack = eps_term - 2 * C * g ** 2 / k_lo ** 2
    lhs = (-4 * lam + 3 * k_hi + t_hi ** 2 + t_lo * C) * C + eps_term + t.D
    rhs = ((-4 * lam + 3 * k_hi + dk * (1 + math.pi / 2)
            + SQRT2 * k_hi * (dk / k_lo) ** 2 * (4 * k_hi / (math.pi * math.sqrt(k_lo)) + 1) ** 2) * C
           + 2 * C * _derivative_terms(k_lo, k_hi, g, lap))
    return D_slack, eps_slack, lhs - rhs


def certify_remainder_bounds(metric, pairs, stats, lam=None):
    """``pairs`` is a list of GeodesicSegment or of (x, y) chart point pairs."""
    stats = surface.CurvatureStats(*stats)
    if len(pairs) and not isinstance(pairs[0], surface.GeodesicSegment):
        xs = np.array([p[0] for p in pairs], float)
        ys = np.array([p[1] for p in pairs], float)
        pairs = surface.geodesic_bvp_many(metric, xs, ys)
    limit = math.pi / (2 * math.sqrt(stats.kappa_hi))
    out = []
    for seg in pairs:
        if seg.d > limit * (1 + 1e-12):
            raise HypothesisFail(f"pair distance {seg.d} exceeds pi/(2 sqrt(kappa_hi))")
        out.append(remainder_slacks(jacobi.two_point_data(seg), stats, 0.0 if lam is None else lam))
    arr = np.array(out).reshape(-1, 3)
    return RemainderReport(np.array([s.d for s in pairs]), arr[:, 0], arr[:, 1], arr[:, 2])
