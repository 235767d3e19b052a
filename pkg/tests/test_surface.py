import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from fundgap import surface as S
from fundgap.errors import ChartExit, DomainError


def radial_unit(p):
    """Unit vector pointing away from the north pole in the sphere chart at p."""
    rho = np.hypot(*p)
    c = 1 / (1 + rho ** 2 / 4)
    return np.asarray(p) / rho / c


def transport_residual(seg):
    """|nabla_{gamma'} e1| by central differences of the frame samples."""
    h = seg.s[1] - seg.s[0]
    p, v, e = seg.pos[1:-1], seg.vel[1:-1], seg.frame[1:-1]
    de = (seg.frame[2:] - seg.frame[:-2]) / (2 * h)
    g111, g112, g122, g211, g212, g222 = seg.metric.christoffel(p[:, 0], p[:, 1])
    cov = np.stack([
        de[:, 0] + g111 * v[:, 0] * e[:, 0] + g112 * (v[:, 0] * e[:, 1] + v[:, 1] * e[:, 0]) + g122 * v[:, 1] * e[:, 1],
        de[:, 1] + g211 * v[:, 0] * e[:, 0] + g212 * (v[:, 0] * e[:, 1] + v[:, 1] * e[:, 0]) + g222 * v[:, 1] * e[:, 1],
    ], -1)
    return float(seg.metric.norm(p, cov).max())


def geodesic_residual(seg):
    h = seg.s[1] - seg.s[0]
    p, v = seg.pos[1:-1], seg.vel[1:-1]
    acc = (seg.vel[2:] - seg.vel[:-2]) / (2 * h)
    g111, g112, g122, g211, g212, g222 = seg.metric.christoffel(p[:, 0], p[:, 1])
    r0 = acc[:, 0] + g111 * v[:, 0] ** 2 + 2 * g112 * v[:, 0] * v[:, 1] + g122 * v[:, 1] ** 2
    r1 = acc[:, 1] + g211 * v[:, 0] ** 2 + 2 * g212 * v[:, 0] * v[:, 1] + g222 * v[:, 1] ** 2
    return float(np.abs(np.r_[r0, r1]).max())


# ---------------------------------------------------------------- metrics and curvature

def test_metric_positive_definite(pinched_metric, sphere):
    rng = np.random.default_rng(0)
    for m, lo, hi in [(pinched_metric, (0.1, -3), (2.7, 3)), (sphere, (-5, -5), (5, 5))]:
        p = rng.uniform(lo, hi, (500, 2))
        g11, g12, g22 = m.metric(p[:, 0], p[:, 1])
        assert np.all(g11 > 0) and np.all(g11 * g22 - g12 ** 2 > 0)


def test_round_sphere_constant_curvature():
    m = S.round_sphere(2.0)
    p = np.random.default_rng(1).uniform(-6, 6, (300, 2))
    assert np.allclose(m.kappa(p[:, 0], p[:, 1]), 0.25, atol=1e-12)
    assert np.all(np.abs(m.kappa_grad(p[:, 0], p[:, 1])[2]) <= 1e-12)
    assert np.all(np.abs(m.kappa_lap(p[:, 0], p[:, 1])) <= 1e-12)


def test_rotsym_curvature_matches_general_formula(pinched_metric):
    r = sp.Symbol("r", positive=True)
    f = sp.sin(r) + sp.Rational(1, 100) * sp.sin(3 * r) * sp.sin(r) ** 2
    u = sp.Symbol("u", real=True)
    generic = S.SurfaceMetric((1, 0, f.subs(r, u) ** 2), ((0.05, 2.8), (-3, 3)), "generic")
    rr = np.linspace(0.1, 2.7, 50)
    th = np.linspace(-1, 1, 50)
    assert np.allclose(generic.kappa(rr, th), pinched_metric.kappa(rr, th), atol=1e-10)
    fo, dfo, d2fo = oracles.pinched_profile_derivatives(0.01)
    assert np.allclose(-d2fo(rr) / fo(rr), pinched_metric.kappa(rr, th), atol=1e-10)


def test_conformal_curvature_formula_matches_christoffel_route():
    phi = 0.05 * S.U ** 2 - 0.03 * S.U * S.V
    m = S.conformal_sphere(phi)
    c = 1 / (1 + (S.U ** 2 + S.V ** 2) / 4)
    generic = S.SurfaceMetric((sp.exp(2 * phi) * c ** 2, 0, sp.exp(2 * phi) * c ** 2), ((-6, 6), (-6, 6)), "g")
    p = np.random.default_rng(2).uniform(-1, 1, (100, 2))
    assert np.allclose(m.kappa(p[:, 0], p[:, 1]), generic.kappa(p[:, 0], p[:, 1]), atol=1e-10)


def test_curvature_stats_sphere_and_flat(sphere, flat):
    st_ = S.curvature_stats(sphere, S.GeodesicBall((0.3, 0.1), 0.4))
    assert st_.kappa_lo == pytest.approx(1, abs=1e-12) and st_.kappa_hi == pytest.approx(1, abs=1e-12)
    assert st_.grad_sup <= 1e-12 and st_.lap_inf_neg <= 1e-12
    assert tuple(S.curvature_stats(flat, S.ChartRect((-1, 1), (-1, 1)))) == (0.0, 0.0, 0.0, 0.0)


def test_curvature_stats_against_dense_oracle(pinched_metric):
    got = S.curvature_stats(pinched_metric, S.ChartRect((0.2, 1.2), (-3.0, 3.0)))
    ref = oracles.rotsym_curvature_stats(*oracles.pinched_profile_derivatives(0.01), 0.2, 1.2)
    for a, b in zip(got, ref):
        assert a == pytest.approx(b, rel=1e-2)


def test_curvature_stats_sample_floor(sphere):
    with pytest.raises(DomainError):
        S.curvature_stats(sphere, S.ChartRect((0, 1), (0, 1)), samples=10)


# ---------------------------------------------------------------- geodesics

def test_ivp_flat_line(flat):
    seg = S.geodesic_ivp(flat, (0.0, 0.0), (1.0, 0.0), 2.0)
    assert seg.d == 2.0
    assert np.allclose(seg.y, [2.0, 0.0], atol=1e-14)
    assert np.allclose(seg.pos[:, 1], 0.0)


def test_ivp_sphere_meridian(sphere):
    p = S.sphere_point(0.3, 0.0)
    seg = S.geodesic_ivp(sphere, p, radial_unit(p), math.pi / 3)
    assert np.allclose(seg.y, S.sphere_point(0.3 + math.pi / 3, 0.0), atol=1e-9)


def test_ivp_rotsym_meridian_residual():
    m = S.rotsym(sp.sin(sp.Symbol("r", positive=True)), (0.05, 3.0))
    seg = S.geodesic_ivp(m, (0.5, 0.3), (1.0, 0.0), 1.0)
    assert np.allclose(seg.y, [1.5, 0.3], atol=1e-12)
    assert geodesic_residual(seg) <= 1e-9


def test_ivp_rejects_non_unit(flat):
    with pytest.raises(DomainError):
        S.geodesic_ivp(flat, (0, 0), (2.0, 0.0), 1.0)


def test_ivp_leaving_chart_raises(pinched_metric):
    with pytest.raises(ChartExit):
        S.geodesic_ivp(pinched_metric, (0.3, 0.0), (-1.0, 0.0), 1.0)


def test_bvp_examples(flat, sphere):
    assert S.geodesic_bvp(flat, (0.0, 0.0), (3.0, 4.0)).d == pytest.approx(5.0, abs=1e-10)
    x, y = S.sphere_point(math.pi / 2, 0.0), S.sphere_point(math.pi / 2, math.pi / 3)
    assert S.geodesic_bvp(sphere, x, y).d == pytest.approx(math.pi / 3, abs=1e-8)
    x, y = S.sphere_point(0.4, 1.0), S.sphere_point(0.9, 1.0)
    assert S.geodesic_bvp(sphere, x, y).d == pytest.approx(0.5, abs=1e-8)


def test_bvp_rejects_equal_points(flat):
    with pytest.raises(DomainError):
        S.geodesic_bvp(flat, (1.0, 1.0), (1.0, 1.0))


def test_segment_invariants(pinched_metric):
    from conftest import pinched_pairs
    xs, ys = pinched_pairs(8, 3)
    for seg in S.geodesic_bvp_many(pinched_metric, xs, ys):
        speed = pinched_metric.norm(seg.pos, seg.vel)
        assert np.abs(speed - 1).max() <= 1e-8
        assert np.abs(seg.pos[-1] - seg.y).max() <= 1e-8
        assert np.abs(pinched_metric.inner(seg.pos, seg.frame, seg.vel)).max() <= 1e-8
        assert np.abs(pinched_metric.norm(seg.pos, seg.frame) - 1).max() <= 1e-8
        assert transport_residual(seg) <= 1e-6


def test_distance_symmetry_and_reversal(pinched_metric):
    from conftest import pinched_pairs
    xs, ys = pinched_pairs(10, 4)
    fwd = S.geodesic_bvp_many(pinched_metric, xs, ys)
    back = S.geodesic_bvp_many(pinched_metric, ys, xs)
    for a, b in zip(fwd, back):
        assert abs(a.d - b.d) <= 1e-8
        assert np.abs(a.reversed().pos - b.pos).max() <= 1e-7
        assert np.abs(a.pos[::-1] - b.pos).max() <= 1e-7


def test_sphere_distance_matches_ambient_angle(sphere):
    rng = np.random.default_rng(5)
    colat = rng.uniform(0.05, 1.2, (100, 2))
    lon = rng.uniform(-math.pi, math.pi, (100, 2))
    xs, ys = S.sphere_point(colat[:, 0], lon[:, 0]), S.sphere_point(colat[:, 1], lon[:, 1])
    segs = S.geodesic_bvp_many(sphere, xs, ys)
    X, Y = S.sphere_ambient(xs), S.sphere_ambient(ys)
    ang = np.arccos(np.clip(np.sum(X * Y, -1), -1, 1))
    assert np.abs(np.array([s.d for s in segs]) - ang).max() <= 1e-8


def test_exp_map_radius_and_ball_boundary(sphere):
    ball = S.GeodesicBall((0.2, -0.1), 0.5)
    th = np.linspace(0, 2 * math.pi, 12, endpoint=False)
    pts = ball.polar_to_chart(sphere, np.full(12, 0.5), th)
    segs = S.geodesic_bvp_many(sphere, np.broadcast_to(ball.center, pts.shape), pts)
    assert np.allclose([s.d for s in segs], 0.5, atol=1e-9)


def test_distance_helper(flat):
    assert S.distance(flat, (0, 0), (0, 2)) == pytest.approx(2.0, abs=1e-12)


@settings(max_examples=15)
@given(st.floats(0.55, 1.25), st.floats(-0.35, 0.35), st.floats(0.55, 1.25), st.floats(-0.35, 0.35))
def test_bvp_hits_target(pinched_metric, r0, t0, r1, t1):
    if math.hypot(r1 - r0, t1 - t0) < 1e-3:
        return
    seg = S.geodesic_bvp(pinched_metric, (r0, t0), (r1, t1), steps=256, check_unique=False)
    assert np.abs(seg.pos[-1] - [r1, t1]).max() <= 1e-8
    assert seg.d > 0
