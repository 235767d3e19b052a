"""Finite-difference cross-checks of the closed-form derivatives of C.

Every function is batched over a list of geodesic segments and returns numpy
arrays aligned with it.
"""
import numpy as np

from . import surface
from .jacobi import solve_jacobi_basis

FIRST_STEP = 1e-4
SECOND_STEP = 1e-3


def _C_of(segs):
    return np.array([solve_jacobi_basis(s).C for s in segs])


def _along(metric, segs, t, end="x"):
    """Points and unit velocities at arclength offset t from x (or from y) along each segment."""
    if end == "x":
        p = np.array([s.pos[0] for s in segs])
        v = np.array([s.vel[0] for s in segs])
    else:
        p = np.array([s.pos[-1] for s in segs])
        v = np.array([s.vel[-1] for s in segs])
    t = np.broadcast_to(np.asarray(t, float), (len(segs),))
    q, w = surface.shoot_state(metric, p, v * t[:, None], steps=32)
    return q, w / t[:, None]


def _C_from(metric, p, v, lengths, steps):
    return _C_of(surface.segments_from(metric, p, v, lengths, steps))


def fd_dC_e2(metric, segs, h=None):
    """Central differences of C as x (resp. y) slides along the geodesic in direction gamma'."""
    n = segs[0].steps
    d = np.array([s.d for s in segs])
    h = FIRST_STEP * np.maximum(1.0, d) if h is None else np.full(len(segs), h)
    out = {}
    # x moves to gamma(-d/2 + t): segment from there of length d - t
    Cs = []
    for sign in (+1, -1):
        p, v = _along(metric, segs, sign * h, "x")
        Cs.append(_C_from(metric, p, v, d - sign * h, n))
    out["x"] = (Cs[0] - Cs[1]) / (2 * h)
    # y moves to gamma(d/2 + t): segment from x of length d + t
    x = np.array([s.pos[0] for s in segs])
    v0 = np.array([s.vel[0] for s in segs])
    Cp = _C_from(metric, x, v0, d + h, n)
    Cm = _C_from(metric, x, v0, d - h, n)
    out["y"] = (Cp - Cm) / (2 * h)
    return out


def fd_dC_e1(metric, segs, h=None):
    """Central differences of C as x (resp. y) moves along the geodesic tangent to e1."""
    d = np.array([s.d for s in segs])
    h = FIRST_STEP * np.maximum(1.0, d) if h is None else np.full(len(segs), h)
    x = np.array([s.pos[0] for s in segs])
    y = np.array([s.pos[-1] for s in segs])
    ex = np.array([s.frame[0] for s in segs])
    ey = np.array([s.frame[-1] for s in segs])
    n = segs[0].steps
    B = len(segs)
    hh = h[:, None]
    xs = np.concatenate([surface.shoot(metric, x, hh * ex, 32), surface.shoot(metric, x, -hh * ex, 32), x, x])
    ys = np.concatenate([y, y, surface.shoot(metric, y, hh * ey, 32), surface.shoot(metric, y, -hh * ey, 32)])
    C = _C_of(surface.geodesic_bvp_many(metric, xs, ys, n))
    return {"x": (C[:B] - C[B:2 * B]) / (2 * h), "y": (C[2 * B:3 * B] - C[3 * B:]) / (2 * h)}


def fd_hessian_E2E2_negC(metric, segs, h=SECOND_STEP):
    n = segs[0].steps
    d = np.array([s.d for s in segs])
    C0 = _C_of(segs)
    p, v = _along(metric, segs, h, "x")
    Cin = _C_from(metric, p, v, d - 2 * h, n)
    p, v = _along(metric, segs, -h, "x")
    Cout = _C_from(metric, p, v, d + 2 * h, n)
    return -(Cin - 2 * C0 + Cout) / h ** 2


def fd_hessian_E1E1_negC(metric, segs, h=SECOND_STEP):
    n = segs[0].steps
    B = len(segs)
    x = np.array([s.pos[0] for s in segs])
    y = np.array([s.pos[-1] for s in segs])
    ex = np.array([s.frame[0] for s in segs])
    ey = np.array([s.frame[-1] for s in segs])
    xs = np.concatenate([surface.shoot(metric, x, h * ex, 32), surface.shoot(metric, x, -h * ex, 32)])
    ys = np.concatenate([surface.shoot(metric, y, h * ey, 32), surface.shoot(metric, y, -h * ey, 32)])
    C = _C_of(surface.geodesic_bvp_many(metric, xs, ys, n))
    return -(C[:B] - 2 * _C_of(segs) + C[B:]) / h ** 2
