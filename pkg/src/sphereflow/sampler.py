"""Euler integration of a learned velocity field.

A *field* is any callable ``field(x, t) -> v`` with ``x`` of shape
``(n, d)`` and ``t`` a float; :func:`network_field` wraps trained
parameters in that form.
"""

from dataclasses import dataclass

import numpy as np

from . import geometry
from .datasets import sample_gaussian
from .errors import NonFiniteState
from .flow import FlowVariant
from .model import forward


def network_field(params):
    return lambda x, t: forward(params, x, t)


def _check_finite(x, step):
    if not np.all(np.isfinite(x)):
        raise NonFiniteState(f"non-finite iterate at Euler step {step}")


def integrate_euclidean(field, x0, steps=100, trajectory=False):
    """Explicit Euler from t=0 to t=1: ``x += v(x, k/steps) / steps``."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    x = np.array(x0, dtype=np.float64)
    path = [x.copy()] if trajectory else None
    h = 1.0 / steps
    for k in range(steps):
        x = x + h * np.asarray(field(x, k * h))
        _check_finite(x, k)
        if trajectory:
            path.append(x.copy())
    return (x, path) if trajectory else x


def integrate_spherical(field, x0, steps=100, radius=None, retraction="project", trajectory=False):
    """Euler on the sphere: project the field onto the tangent space, take
    the step, then map back to the sphere.

    ``retraction="project"`` rescales the stepped point to the radius;
    ``"exp"`` follows the great circle (exponential map) instead.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    x = np.array(x0, dtype=np.float64)
    r = np.linalg.norm(x, axis=-1, keepdims=True) if radius is None else float(radius)
    x = geometry.project_to_sphere(x, 1.0) * r
    path = [x.copy()] if trajectory else None
    h = 1.0 / steps
    for k in range(steps):
        v = geometry.tangent_project(x, np.asarray(field(x, k * h)))
        if retraction == "exp":
            x = geometry.exp_map(x, h * v)
        elif retraction == "project":
            x = geometry.project_to_sphere(x + h * v, 1.0) * r
        else:
            raise ValueError(f"unknown retraction {retraction!r}")
        _check_finite(x, k)
        if trajectory:
            path.append(x.copy())
    return (x, path) if trajectory else x


def finalize_samples(samples, final_norm):
    """Rescale every sample to norm ``final_norm`` (the dataset's mean norm)."""
    if not final_norm > 0:
        raise ValueError("final_norm must be positive")
    return geometry.rescale_to_norm(samples, final_norm)


@dataclass(frozen=True)
class SampleRunConfig:
    variant: FlowVariant
    steps: int = 100
    final_norm: float | None = None
    use_ema: bool = True
    retraction: str = "project"

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.final_norm is not None and not self.final_norm > 0:
            raise ValueError("final_norm must be positive")


def generate(field, n, d, cfg, rng, rescale=True):
    """Draw ``n`` source points and push them through the field.

    Sources are standard Gaussian, projected to the variant radius when the
    variant projects its source. Spherical variants integrate on the sphere;
    when ``rescale`` is set and ``cfg.final_norm`` is given, outputs are
    rescaled to that norm.
    """
    x0 = sample_gaussian(n, d, rng)
    variant = cfg.variant
    if variant.source_projection:
        x0 = geometry.project_to_sphere(x0, variant.radius)
    if variant.spherical:
        out = integrate_spherical(field, x0, cfg.steps, variant.radius, cfg.retraction)
    else:
        out = integrate_euclidean(field, x0, cfg.steps)
    if rescale and cfg.final_norm is not None:
        out = finalize_samples(out, cfg.final_norm)
    return out
