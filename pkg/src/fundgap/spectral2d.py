"""Dirichlet Laplace-Beltrami eigenpairs by piecewise-linear finite elements.

Meshes live in chart coordinates. Geodesic balls are meshed in geodesic polar
coordinates (rings pushed through the exponential map), rectangles with a
structured grid whose sides may bow outward along circular arcs, and other
convex chart regions by Delaunay triangulation of a lattice.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
from scipy.sparse.linalg import eigsh
from scipy.spatial import Delaunay, cKDTree

from . import surface
from .errors import BoundaryTooClose, DegenerateMesh, DomainError, MeshFail, SolverFail


MIN_SIDE_DIVISIONS = 4


@dataclass(frozen=True)
class DomainSpec:
    kind: str                       # "geodesic_ball" or "chart_region"
    center: tuple | None = None
    radius: float | None = None
    boundary: np.ndarray | None = field(default=None, compare=False)
    rect: tuple | None = None       # (u0, u1, v0, v1, arc_radius) for bowed rectangles
    margin: float = 0.0

    @classmethod
    def ball(cls, center, radius, margin=0.0):
        return cls("geodesic_ball", center=tuple(float(c) for c in center), radius=float(radius),
                   margin=margin)

    @classmethod
    def region(cls, boundary, margin=0.0):
        b = np.asarray(boundary, float)
        if len(b) < 3:
            raise DomainError("boundary needs at least three points")
        return cls("chart_region", boundary=b, margin=margin)

    @classmethod
    def rectangle(cls, width, height, center=(0.0, 0.0), arc_radius=math.inf, margin=0.0, samples=400):
        """Axis-aligned rectangle; with finite ``arc_radius`` every side bows outward on a circle."""
        cu, cv = center
        r = (cu - width / 2, cu + width / 2, cv - height / 2, cv + height / 2, float(arc_radius))
        bnd = _rect_boundary(r, samples)
        return cls("chart_region", boundary=bnd, rect=r, margin=margin)

    def validate(self, metric, kappa_hi):
        """Convexity-by-construction check: ball radius below pi/(4 sqrt(kappa_hi))."""
        if self.kind == "geodesic_ball" and kappa_hi > 0:
            limit = math.pi / (4 * math.sqrt(kappa_hi))
            if self.radius >= limit:
                raise DomainError(f"ball radius {self.radius} not below {limit:.6g}")
        if not metric.inside(np.asarray(self.boundary_points(metric, 64))).all():
            raise DomainError("domain leaves the chart")

    def boundary_points(self, metric, n):
        if self.kind == "geodesic_ball":
            th = np.linspace(0, 2 * np.pi, n, endpoint=False)
            return surface.GeodesicBall(self.center, self.radius).polar_to_chart(
                metric, np.full(n, self.radius), th)
        if self.rect is not None:
            return _rect_boundary(self.rect, max(n // 4, 1) * 4)
        b = self.boundary
        idx = np.linspace(0, len(b), n, endpoint=False).astype(int)
        return b[idx]


def _sagitta(chord, radius):
    if not math.isfinite(radius):
        return 0.0
    return radius - math.sqrt(radius ** 2 - chord ** 2 / 4)


def _rect_sides(rect):
    """Four side maps t in [0,1] -> point, in counterclockwise order: bottom, right, top, left."""
    u0, u1, v0, v1, R = rect
    sw, sh = _sagitta(u1 - u0, R), _sagitta(v1 - v0, R)

    def bow(t, chord, s):
        # exact circular arc through both ends with sagitta s, as offset from the chord
        if s == 0.0:
            return np.zeros_like(t)
        x = (t - 0.5) * chord
        return np.sqrt(R ** 2 - x ** 2) - (R - s)

    bottom = lambda t: np.stack([u0 + t * (u1 - u0), v0 - bow(t, u1 - u0, sw)], -1)
    right = lambda t: np.stack([u1 + bow(t, v1 - v0, sh), v0 + t * (v1 - v0)], -1)
    top = lambda t: np.stack([u0 + t * (u1 - u0), v1 + bow(t, u1 - u0, sw)], -1)
    left = lambda t: np.stack([u0 - bow(t, v1 - v0, sh), v0 + t * (v1 - v0)], -1)
    return bottom, right, top, left


def _rect_boundary(rect, samples):
    bottom, right, top, left = _rect_sides(rect)
    k = max(samples // 4, 2)
    t = np.linspace(0, 1, k, endpoint=False)
    return np.concatenate([bottom(t), right(t), top(1 - t), left(1 - t)])


@dataclass(eq=False)
class Mesh:
    vertices: np.ndarray            # (N, 2) chart coordinates
    triangles: np.ndarray           # (T, 3), counterclockwise in the chart
    boundary: np.ndarray            # (N,) bool
    h: float                        # max chart edge length
    h_nominal: float                # resolution parameter used for refinement ratios
    polar: np.ndarray | None = None  # (N, 2) geodesic polar (r, theta) for ball meshes
    divisions: tuple | None = None   # ring count, or (nx, ny) for rectangles

    @property
    def interior(self):
        return np.nonzero(~self.boundary)[0]

    def edges(self):
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    def neighbours(self):
        if not hasattr(self, "_nbrs"):
            e = self.edges()
            n = len(self.vertices)
            adj = sps.coo_matrix((np.ones(2 * len(e)), (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])),
                                 shape=(n, n)).tocsr()
            self._nbrs = adj
        return self._nbrs


def _signed_area(v, t):
    a, b, c = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))


def _finish(vertices, triangles, boundary, h_nominal, polar=None):
    triangles = np.asarray(triangles, dtype=np.int64)
    area = _signed_area(vertices, triangles)
    flip = area < 0
    triangles[flip] = triangles[flip][:, [0, 2, 1]]
    if np.any(np.abs(area) <= 1e-14 * h_nominal ** 2):
        raise MeshFail("degenerate triangle in chart")
    mesh = Mesh(vertices, triangles, boundary, 0.0, h_nominal, polar)
    e = mesh.edges()
    mesh.h = float(np.max(np.linalg.norm(vertices[e[:, 0]] - vertices[e[:, 1]], axis=1)))
    return mesh


def _ring_merge(inner, outer, th_in, th_out):
    """Triangulate the annulus between two closed rings of vertex ids by angular sweeping."""
    tris = []
    i = j = 0
    n, m = len(inner), len(outer)
    while i < n or j < m:
        a_next = th_in[(i + 1) % n] + (2 * np.pi if i + 1 >= n else 0.0)
        b_next = th_out[(j + 1) % m] + (2 * np.pi if j + 1 >= m else 0.0)
        if j >= m or (i < n and a_next <= b_next):
            tris.append((inner[i % n], outer[j % m], inner[(i + 1) % n]))
            i += 1
        else:
            tris.append((inner[i % n], outer[j % m], outer[(j + 1) % m]))
            j += 1
    return tris


def _polar_mesh(metric, center, radius, rings):
    r, th, ring_ids = [0.0], [0.0], []
    idx = 1
    for k in range(1, rings + 1):
        n = 6 * k
        ids = list(range(idx, idx + n))
        ring_ids.append(ids)
        r.extend([radius * k / rings] * n)
        th.extend((2 * np.pi * np.arange(n) / n).tolist())
        idx += n
    r, th = np.array(r), np.array(th)
    tris = [(0, ring_ids[0][i], ring_ids[0][(i + 1) % 6]) for i in range(6)]
    for k in range(1, rings):
        tris += _ring_merge(ring_ids[k - 1], ring_ids[k], th[ring_ids[k - 1]], th[ring_ids[k]])
    pts = surface.GeodesicBall(center, radius).polar_to_chart(metric, r, th)
    boundary = np.zeros(len(r), bool)
    boundary[ring_ids[-1]] = True
    return pts, tris, boundary, np.stack([r, th], -1)


def _rect_mesh(rect, nx, ny):
    """Coons patch over the four (possibly bowed) sides, alternating diagonals."""
    bottom, right, top, left = _rect_sides(rect)
    s = np.linspace(0, 1, nx + 1)
    t = np.linspace(0, 1, ny + 1)
    S, T = np.meshgrid(s, t, indexing="ij")
    B, Tp = bottom(S), top(S)
    L, Rt = left(T), right(T)
    c00, c10, c01, c11 = bottom(np.array(0.0)), bottom(np.array(1.0)), top(np.array(0.0)), top(np.array(1.0))
    S_, T_ = S[..., None], T[..., None]
    P = ((1 - T_) * B + T_ * Tp + (1 - S_) * L + S_ * Rt
         - ((1 - S_) * (1 - T_) * c00 + S_ * (1 - T_) * c10 + (1 - S_) * T_ * c01 + S_ * T_ * c11))
    vid = np.arange((nx + 1) * (ny + 1)).reshape(nx + 1, ny + 1)
    tris = []
    for i in range(nx):
        for j in range(ny):
            a, b, c, d = vid[i, j], vid[i + 1, j], vid[i + 1, j + 1], vid[i, j + 1]
            if (i + j) % 2 == 0:
                tris += [(a, b, c), (a, c, d)]
            else:
                tris += [(a, b, d), (b, c, d)]
    boundary = np.zeros((nx + 1, ny + 1), bool)
    boundary[0, :] = boundary[-1, :] = boundary[:, 0] = boundary[:, -1] = True
    return P.reshape(-1, 2), tris, boundary.ravel()


def _polygon_mesh(boundary_pts, h):
    """Lattice points inside a convex polygon plus a resampled boundary, Delaunay-triangulated."""
    b = np.asarray(boundary_pts, float)
    closed = np.vstack([b, b[:1]])
    seg = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    cum = np.concatenate([[0], np.cumsum(seg)])
    nb = max(int(math.ceil(cum[-1] / h)), 8)
    t = np.linspace(0, cum[-1], nb, endpoint=False)
    bpts = np.stack([np.interp(t, cum, closed[:, 0]), np.interp(t, cum, closed[:, 1])], -1)
    lo, hi = b.min(0), b.max(0)
    step = h / math.sqrt(2)
    gu = np.arange(lo[0], hi[0] + step, step)
    gv = np.arange(lo[1], hi[1] + step, step)
    G = np.stack(np.meshgrid(gu, gv, indexing="ij"), -1).reshape(-1, 2)
    # signed clearance from every edge line (positive inside a convex polygon)
    edges = np.diff(closed, axis=0)
    normals = np.stack([edges[:, 1], -edges[:, 0]], -1) / seg[:, None]
    shoelace = np.sum(closed[:-1, 0] * closed[1:, 1] - closed[1:, 0] * closed[:-1, 1])
    if shoelace < 0:
        normals = -normals
    offsets = np.sum(normals * closed[:-1], axis=1)
    dist = np.min(offsets[None, :] - G @ normals.T, axis=1)
    inner = G[dist > 0.4 * step]
    pts = np.vstack([bpts, inner])
    tri = Delaunay(pts).simplices
    bflag = np.zeros(len(pts), bool)
    bflag[:nb] = True
    return pts, tri, bflag, nb


def build_mesh(metric, domain, h, divisions=None):
    """Quasi-uniform triangulation with chart edges not longer than h.

    ``divisions`` fixes the ring count of a ball mesh or (nx, ny) of a
    rectangle instead of deriving it from h; refinement uses it to halve the
    resolution exactly.
    """
    if h <= 0:
        raise DomainError("h must be positive")
    if domain.kind == "geodesic_ball":
        K = divisions or max(int(math.ceil(1.5 * domain.radius / h)), 2)
        while True:
            if 6 * K < 8:
                raise MeshFail("boundary resolution below 8 segments")
            pts, tris, bnd, polar = _polar_mesh(metric, domain.center, domain.radius, K)
            mesh = _finish(pts, tris, bnd, domain.radius / K, polar)
            mesh.divisions = K
            if divisions is not None or mesh.h <= h:
                return mesh
            K = int(math.ceil(K * mesh.h / h * 1.01))
    if domain.rect is not None:
        u0, u1, v0, v1, _ = domain.rect
        if divisions is None:
            nx = max(int(math.ceil((u1 - u0) / h)), MIN_SIDE_DIVISIONS)
            ny = max(int(math.ceil((v1 - v0) / h)), MIN_SIDE_DIVISIONS)
        else:
            nx, ny = divisions
        while True:
            pts, tris, bnd = _rect_mesh(domain.rect, nx, ny)
            mesh = _finish(pts, tris, bnd, max((u1 - u0) / nx, (v1 - v0) / ny))
            mesh.divisions = (nx, ny)
            if divisions is not None or mesh.h <= h:
                return mesh
            nx, ny = nx + 1, ny + 1
    pts, tris, bnd, nb = _polygon_mesh(domain.boundary, h)
    if nb < 8:
        raise MeshFail("boundary resolution below 8 segments")
    return _finish(pts, tris, bnd, h)


def assemble(metric, mesh):
    """Stiffness and mass matrices with the metric frozen at each triangle centroid."""
    v, t = mesh.vertices, mesh.triangles
    a, b, c = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
    cen = (a + b + c) / 3
    g11, g12, g22 = metric.metric(cen[:, 0], cen[:, 1])
    det = g11 * g22 - g12 ** 2
    if np.any(det <= 0):
        raise DegenerateMesh("metric not positive definite at a centroid")
    area = _signed_area(v, t)
    w = area * np.sqrt(det)
    if np.any(w <= 0):
        raise DegenerateMesh("non-positive metric-weighted triangle area")
    # barycentric gradients in the chart: rows for the three vertices
    e0, e1, e2 = c - b, a - c, b - a
    grads = np.stack([np.stack([-e[:, 1], e[:, 0]], -1) for e in (e0, e1, e2)], 1) / (2 * area)[:, None, None]
    inv = np.stack([np.stack([g22, -g12], -1), np.stack([-g12, g11], -1)], 1) / det[:, None, None]
    Ke = np.einsum("tia,tab,tjb->tij", grads, inv, grads) * w[:, None, None]
    Me = (np.ones((3, 3)) + np.eye(3))[None] * (w / 12)[:, None, None]
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = len(v)
    A = sps.csr_matrix((Ke.ravel(), (rows, cols)), shape=(n, n))
    B = sps.csr_matrix((Me.ravel(), (rows, cols)), shape=(n, n))
    return A, B


@dataclass(eq=False)
class SpectralResult:
    lambda1: float
    lambda2: float
    u1: np.ndarray
    u2: np.ndarray
    h: float
    err_est: float
    mesh: Mesh
    metric: surface.SurfaceMetric
    domain: DomainSpec | None = None
    eigenvalues: np.ndarray | None = None
    lambda1_extrap: float | None = None
    lambda2_extrap: float | None = None
    levels: list = field(default_factory=list)   # (h, lambda1, lambda2) per refinement level
    order: float | None = None

    @property
    def gap(self):
        return self.lambda2 - self.lambda1

    def u1_unit_max(self):
        return self.u1 / np.max(self.u1)


def solve_dirichlet_eigs(metric, mesh, k=2, domain=None):
    if k < 2:
        raise DomainError("k must be at least 2")
    A, B = assemble(metric, mesh)
    I = mesh.interior
    if len(I) <= k + 1:
        raise MeshFail("too few interior vertices")
    AI = A[I][:, I].tocsc()
    BI = B[I][:, I].tocsc()
    try:
        start = np.random.default_rng(0).standard_normal(AI.shape[0])  # fixed start: reproducible vectors
        vals, vecs = eigsh(AI, k=k, M=BI, sigma=0.0, which="LM", tol=1e-12, v0=start)
    except Exception as exc:  # ARPACK convergence or factorization failure
        raise SolverFail(str(exc)) from exc
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    if not (0 < vals[0] < vals[1]):
        raise SolverFail(f"eigenvalues not simple and positive: {vals[:2]}")
    full = np.zeros((len(mesh.vertices), k))
    full[I] = vecs
    # B-orthonormalize (ARPACK already does, this tightens it)
    Bf = B
    for i in range(k):
        for j in range(i):
            full[:, i] -= (full[:, j] @ (Bf @ full[:, i])) * full[:, j]
        full[:, i] /= math.sqrt(full[:, i] @ (Bf @ full[:, i]))
    if full[I, 0].sum() < 0:
        full[:, 0] = -full[:, 0]
    if full[I[0], 1] < 0:
        full[:, 1] = -full[:, 1]
    return SpectralResult(float(vals[0]), float(vals[1]), full[:, 0], full[:, 1], mesh.h, math.nan,
                          mesh, metric, domain, vals)


def solve_refined(metric, domain, h, levels=2, k=2):
    """Solve on meshes of resolution h, h/2, ... (``levels`` of them).

    Returns the finest result carrying Richardson-extrapolated eigenvalues and
    err_est = max |lambda_coarse - lambda_fine| / (ratio^2 - 1) over the last two levels.
    """
    if levels < 1:
        raise DomainError("levels must be >= 1")
    results = []
    base = build_mesh(metric, domain, h)
    if base.divisions is None:
        meshes = [base] + [build_mesh(metric, domain, h / 2 ** l) for l in range(1, levels)]
    else:
        div = np.atleast_1d(base.divisions)
        meshes = [base] + [build_mesh(metric, domain, h / 2 ** l, divisions=_scaled(div, 2 ** l))
                           for l in range(1, levels)]
    for m in meshes:
        results.append(solve_dirichlet_eigs(metric, m, k, domain))
    fine = results[-1]
    fine.levels = [(r.h, r.lambda1, r.lambda2) for r in results]
    if levels >= 2:
        c = results[-2]
        ratio = c.mesh.h_nominal / fine.mesh.h_nominal
        denom = ratio ** 2 - 1
        d1, d2 = c.lambda1 - fine.lambda1, c.lambda2 - fine.lambda2
        fine.lambda1_extrap = fine.lambda1 - d1 / denom
        fine.lambda2_extrap = fine.lambda2 - d2 / denom
        fine.err_est = float(max(abs(d1), abs(d2)) / denom)
    if levels >= 3:
        a, b = results[-3], results[-2]
        num, den = a.lambda1 - b.lambda1, b.lambda1 - fine.lambda1
        if num > 0 and den > 0:
            fine.order = math.log(num / den) / math.log(b.mesh.h_nominal / fine.mesh.h_nominal)
    return fine


def _scaled(div, factor):
    out = tuple(int(d) * factor for d in div)
    return out[0] if len(out) == 1 else out


def diameter(metric, domain, boundary_samples=64, candidates=4):
    """Largest geodesic distance among sampled boundary pairs.

    Every sample is paired with its ``candidates`` farthest samples in the
    chart; those pairs are solved exactly.
    """
    pts = domain.boundary_points(metric, boundary_samples)
    n = len(pts)
    D2 = np.sum((pts[:, None] - pts[None]) ** 2, -1)
    far = np.argsort(-D2, axis=1)[:, :candidates]
    pairs = {tuple(sorted((i, int(j)))) for i in range(n) for j in far[i] if j != i}
    pairs = sorted(pairs)
    xs = pts[[p[0] for p in pairs]]
    ys = pts[[p[1] for p in pairs]]
    segs = surface.geodesic_bvp_many(metric, xs, ys)
    return float(max(s.d for s in segs))


# ---------------------------------------------------------------- eigenfunction evaluation

def _tree(result):
    if not hasattr(result, "_kdtree"):
        result._kdtree = cKDTree(result.mesh.vertices)
    return result._kdtree


def boundary_distance(result, p):
    """Metric length (frozen at p) of the chart offset to the nearest boundary vertex."""
    m = result.mesh
    bv = m.vertices[m.boundary]
    g11, g12, g22 = result.metric.metric(p[0], p[1])
    d = bv - p
    q = g11 * d[:, 0] ** 2 + 2 * g12 * d[:, 0] * d[:, 1] + g22 * d[:, 1] ** 2
    return float(np.sqrt(q.min()))


def local_fit(result, p, u=None, margin=None):
    """Quadratic least-squares fit of a vertex field around p over the nearest vertex's 2-ring.

    Returns (value, gradient in chart coordinates, chart Hessian).
    """
    p = np.asarray(p, float)
    u = result.u1 if u is None else u
    margin = (result.domain.margin if result.domain is not None else 0.0) if margin is None else margin
    if margin > 0 and boundary_distance(result, p) < margin:
        raise BoundaryTooClose(f"point {p} is within {margin} of the boundary")
    _, i = _tree(result).query(p)
    adj = result.mesh.neighbours()
    ring1 = adj[i].indices
    ring = np.unique(np.concatenate([[i], ring1, adj[ring1].indices]))
    d = result.mesh.vertices[ring] - p
    X = np.stack([np.ones(len(d)), d[:, 0], d[:, 1], d[:, 0] ** 2 / 2, d[:, 0] * d[:, 1], d[:, 1] ** 2 / 2], 1)
    coef, *_ = np.linalg.lstsq(X, u[ring], rcond=None)
    return coef[0], coef[1:3], np.array([[coef[3], coef[4]], [coef[4], coef[5]]])


def log_gradient(result, p, margin=None):
    """Gradient of log u1 at p as a tangent vector (chart components)."""
    val, grad, _ = local_fit(result, p, margin=margin)
    if val <= 0:
        raise BoundaryTooClose(f"u1 not positive at {p}")
    dw = grad / val
    g11, g12, g22 = result.metric.metric(p[0], p[1])
    det = g11 * g22 - g12 ** 2
    return np.array([g22 * dw[0] - g12 * dw[1], -g12 * dw[0] + g11 * dw[1]]) / det


def log_differential(result, p, margin=None):
    """Differential of log u1 at p in chart components (pairs directly with velocities)."""
    val, grad, _ = local_fit(result, p, margin=margin)
    if val <= 0:
        raise BoundaryTooClose(f"u1 not positive at {p}")
    return grad / val


def value_at(result, p, u=None):
    return float(local_fit(result, p, u=u, margin=0.0)[0])
