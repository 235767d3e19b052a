"""Generalized sine, cosine and tangent of the constant-curvature model spaces.

All functions accept a scalar curvature ``K`` and a scalar or array ``s``.
"""
import numpy as np

from .errors import DomainError, PoleError

# below this |K| s^2 the closed forms lose digits; use the series instead
_SERIES_CUTOFF = 1e-8
POLE_GUARD = 1e-12


def _out(x, scalar):
    return float(x) if scalar else x


def sn(K, s):
    scalar = np.ndim(s) == 0
    s = np.asarray(s, dtype=float)
    x = K * s * s
    series = s * (1.0 - x / 6.0 + x * x / 120.0 - x ** 3 / 5040.0)
    if K > 0:
        rk = np.sqrt(K)
        closed = np.sin(rk * s) / rk
    elif K < 0:
        rk = np.sqrt(-K)
        closed = np.sinh(rk * s) / rk
    else:
        closed = s
    return _out(np.where(np.abs(x) < _SERIES_CUTOFF, series, closed), scalar)


def cs(K, s):
    scalar = np.ndim(s) == 0
    s = np.asarray(s, dtype=float)
    x = K * s * s
    series = 1.0 - x / 2.0 + x * x / 24.0 - x ** 3 / 720.0
    if K > 0:
        closed = np.cos(np.sqrt(K) * s)
    elif K < 0:
        closed = np.cosh(np.sqrt(-K) * s)
    else:
        closed = np.ones_like(s)
    return _out(np.where(np.abs(x) < _SERIES_CUTOFF, series, closed), scalar)


def tn(K, s):
    """K sn_K / cs_K; raises PoleError past the focal distance pi/(2 sqrt K)."""
    scalar = np.ndim(s) == 0
    c = np.asarray(cs(K, s))
    if np.any(c <= POLE_GUARD):
        raise PoleError(f"cs_K(s) <= {POLE_GUARD} for K={K}")
    return _out(K * np.asarray(sn(K, s)) / c, scalar)


def tn_sq_diff_bound(k_lo, k_hi, d):
    """Upper bound for tn_{k_hi}(d/2)^2 - tn_{k_lo}(d/2)^2 valid when d <= pi/(2 sqrt k_hi)."""
    if not (0 < k_lo <= k_hi):
        raise DomainError(f"need 0 < k_lo <= k_hi, got {k_lo}, {k_hi}")
    if not (0 < d <= np.pi / (2 * np.sqrt(k_hi)) * (1 + 1e-14)):
        raise DomainError(f"need 0 < d <= pi/(2 sqrt(k_hi)), got d={d}")
    return (k_hi - k_lo) * (1 + np.pi / 2)
