"""Hypersphere primitives.

Every function works on a single vector of shape ``(d,)`` or on a batch of
shape ``(n, d)``; the last axis is always the ambient dimension. Points on
the sphere are plain arrays, their radius is implied by their norm.
"""

import numpy as np

from .errors import (
    AntipodalPoints,
    DimensionMismatch,
    NonPositiveRadius,
    RadiusMismatch,
    ZeroVector,
)

SMALL_ANGLE = 1e-4
ANTIPODAL_GUARD = 1e-6
ZERO_NORM = 1e-30
RADIUS_RTOL = 1e-9


def _as_array(v):
    v = np.asarray(v, dtype=np.float64)
    if v.ndim == 0:
        raise DimensionMismatch("expected a vector, got a scalar")
    return v


def _check_same_shape(a, b):
    if a.shape[-1] != b.shape[-1]:
        raise DimensionMismatch(f"dimension {a.shape[-1]} != {b.shape[-1]}")


def _norms(v):
    return np.linalg.norm(v, axis=-1, keepdims=True)


def _t_like(t, x):
    t = np.asarray(t, dtype=np.float64)
    if t.ndim == 0:
        return t
    return t.reshape(t.shape + (1,) * (x.ndim - t.ndim))


def _common_radius(a, b, radius=None):
    na, nb = _norms(a), _norms(b)
    if np.any(na < ZERO_NORM) or np.any(nb < ZERO_NORM):
        raise ZeroVector("points on a sphere cannot be zero")
    ref = na if radius is None else np.full_like(na, float(radius))
    if np.any(np.abs(na - ref) > RADIUS_RTOL * ref) or np.any(np.abs(nb - ref) > RADIUS_RTOL * ref):
        raise RadiusMismatch("points do not share a common radius")
    return ref


def project_to_sphere(v, r=1.0):
    """Rescale ``v`` (or each row of it) to norm ``r``, keeping its direction."""
    if not r > 0:
        raise NonPositiveRadius(f"radius must be positive, got {r}")
    v = _as_array(v)
    n = _norms(v)
    if np.any(n < ZERO_NORM):
        raise ZeroVector("cannot project a zero vector onto a sphere")
    return v * (r / n)


def rescale_to_norm(v, s):
    """Give ``v`` norm ``s``. Same map as `project_to_sphere`, named for the
    post-generation use of restoring a dataset's average norm."""
    return project_to_sphere(v, s)


def angle_between(a, b, radius=None):
    """Angle in ``[0, pi]`` between points ``a`` and ``b`` on a common sphere."""
    a, b = _as_array(a), _as_array(b)
    _check_same_shape(a, b)
    _common_radius(a, b, radius)
    # |a||b| rather than r^2 keeps the result exactly symmetric
    cos = np.sum(a * b, axis=-1) / (np.linalg.norm(a, axis=-1) * np.linalg.norm(b, axis=-1))
    return np.arccos(np.clip(cos, -1.0, 1.0))


def _geodesic_angle(a, b):
    # 2*atan2(|a-b|, |a+b|) keeps full relative precision near 0 and pi,
    # where arccos of the normalized dot product does not.
    return 2.0 * np.arctan2(_norms(a - b), _norms(a + b))


def _prepare(x0, x1, radius=None):
    x0, x1 = _as_array(x0), _as_array(x1)
    _check_same_shape(x0, x1)
    r = _common_radius(x0, x1, radius)
    theta = _geodesic_angle(x0, x1)
    bad = theta[..., 0] >= np.pi - ANTIPODAL_GUARD
    if np.any(bad):
        idx = np.flatnonzero(np.atleast_1d(bad))
        raise AntipodalPoints("geodesic undefined between antipodal points", idx)
    return x0, x1, r, theta


def _coefficients(t, theta):
    """Weights (a, b, da, db) with slerp = a*x0 + b*x1 and its t-derivative
    da*x0 + db*x1. Below SMALL_ANGLE a second-order series replaces the
    sin(theta) division."""
    small = theta < SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    s = np.sin(safe)
    a = np.sin((1.0 - t) * safe) / s
    b = np.sin(t * safe) / s
    k = safe / s
    da = -k * np.cos((1.0 - t) * safe)
    db = k * np.cos(t * safe)
    if np.any(small):
        th2 = theta * theta
        u = 1.0 - t
        a_s = u * (1.0 + (1.0 - u * u) * th2 / 6.0)
        b_s = t * (1.0 + (1.0 - t * t) * th2 / 6.0)
        k_s = 1.0 + th2 / 6.0
        da_s = -k_s * (1.0 - u * u * th2 / 2.0)
        db_s = k_s * (1.0 - t * t * th2 / 2.0)
        a, b = np.where(small, a_s, a), np.where(small, b_s, b)
        da, db = np.where(small, da_s, da), np.where(small, db_s, db)
    return a, b, da, db, small


def slerp(x0, x1, t, radius=None):
    """Point at fraction ``t`` along the great-circle arc from ``x0`` to ``x1``.

    Parameters
    ----------
    x0, x1 : array, shape (d,) or (n, d)
        Endpoints on a sphere of common radius.
    t : float or array of shape (n,)
        Arc-length fraction. Values outside [0, 1] extrapolate along the
        same great circle.
    radius : float, optional
        If given, both endpoints are checked against it.

    Returns
    -------
    array of the broadcast shape of ``x0`` and ``x1``, on the same sphere.
    """
    x, _ = geodesic(x0, x1, t, radius)
    return x


def geodesic_velocity(x0, x1, t, radius=None):
    """Tangent velocity of the constant-speed geodesic at fraction ``t``.

    Its norm is ``r * theta`` for every ``t`` and it is orthogonal to
    ``slerp(x0, x1, t)``.
    """
    _, u = geodesic(x0, x1, t, radius)
    return u


def geodesic(x0, x1, t, radius=None):
    """Return ``(slerp(x0, x1, t), geodesic_velocity(x0, x1, t))`` in one pass."""
    x0, x1, r, theta = _prepare(x0, x1, radius)
    t = _t_like(t, x0)
    a, b, da, db, small = _coefficients(t, theta)
    x = a * x0 + b * x1
    if np.any(small):
        x = np.where(small, x * (r / _norms(x)), x)
    u = da * x0 + db * x1
    return x, u


def tangent_project(base, v):
    """Remove the radial component of ``v`` at ``base``."""
    base, v = _as_array(base), _as_array(v)
    _check_same_shape(base, v)
    r2 = np.sum(base * base, axis=-1, keepdims=True)
    if np.any(r2 < ZERO_NORM**2):
        raise ZeroVector("tangent space undefined at the origin")
    return v - (np.sum(v * base, axis=-1, keepdims=True) / r2) * base


def exp_map(base, v):
    """Follow the great circle from ``base`` along tangent vector ``v``.

    Only used as an optional integrator step; ``v`` is assumed tangent.
    """
    base, v = _as_array(base), _as_array(v)
    r = _norms(base)
    speed = _norms(v)
    angle = speed / r
    small = angle < SMALL_ANGLE
    sinc = np.where(small, 1.0 - angle**2 / 6.0, np.sin(angle) / np.where(small, 1.0, angle))
    out = np.cos(angle) * base + sinc * v
    return out * (r / _norms(out))
