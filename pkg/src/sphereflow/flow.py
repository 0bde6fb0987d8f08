"""Conditional paths, regression targets and batch assembly for the four
flow-matching variants (I-CFM, OT-CFM, SOT-CFM, SFM)."""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import geometry
from .coupling import Metric, cost_matrix, exact_assignment, sample_pairs, sinkhorn
from .errors import AntipodalPoints, DimensionMismatch, InvalidVariant, LengthMismatch


class Variant(str, Enum):
    ICFM = "icfm"
    OTCFM = "otcfm"
    SOTCFM = "sotcfm"
    SFM = "sfm"


@dataclass(frozen=True)
class FlowVariant:
    kind: Variant = Variant.ICFM
    source_projection: bool = False
    target_projection: bool = False
    radius: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", Variant(self.kind))
        if not self.radius > 0:
            raise InvalidVariant(f"radius must be positive, got {self.radius}")
        if self.kind is Variant.SFM and not (self.source_projection and self.target_projection):
            raise InvalidVariant(
                "SFM needs both source and target projected onto the sphere; "
                "SFM on unprojected data is inapplicable"
            )

    @property
    def spherical(self):
        return self.kind is Variant.SFM

    @property
    def metric(self):
        if self.kind is Variant.OTCFM:
            return Metric.EUCLIDEAN_SQ
        if self.kind in (Variant.SOTCFM, Variant.SFM):
            return Metric.ANGULAR
        return None


@dataclass(frozen=True)
class Coupler:
    """How OT pairs are extracted within a training batch.

    ``mode`` is ``"sample"`` (draw pairs from the Sinkhorn plan) or
    ``"exact"`` (Hungarian permutation). ``ot_batch_size`` splits the batch
    into independently coupled chunks; ``None`` couples the whole batch.
    Squared-Euclidean costs are divided by their max before Sinkhorn when
    ``normalize_euclidean`` is set.
    """

    eps: float = 0.1
    max_iter: int = 1000
    tol: float = 1e-6
    mode: str = "sample"
    ot_batch_size: int | None = None
    normalize_euclidean: bool = True

    def pair(self, src, tgt, metric, rng):
        """Return index arrays ``(i, j)`` pairing ``src[i]`` with ``tgt[j]``."""
        n = src.shape[0]
        chunk = n if self.ot_batch_size is None else min(self.ot_batch_size, n)
        rows, cols = [], []
        for start in range(0, n, chunk):
            stop = min(start + chunk, n)
            cost = cost_matrix(src[start:stop], tgt[start:stop], metric)
            if metric is Metric.EUCLIDEAN_SQ and self.normalize_euclidean and cost.max() > 0:
                cost = cost / cost.max()
            if self.mode == "exact":
                i = np.arange(stop - start)
                j = exact_assignment(cost, cap=max(stop - start, 1))
            elif self.mode == "sample":
                plan = sinkhorn(cost, self.eps, self.max_iter, self.tol)
                ij = sample_pairs(plan, stop - start, rng)
                i, j = ij[:, 0], ij[:, 1]
            else:
                raise ValueError(f"unknown coupling mode {self.mode!r}")
            rows.append(i + start)
            cols.append(j + start)
        return np.concatenate(rows), np.concatenate(cols)


@dataclass
class PathBatch:
    """Points ``x_t`` on conditional paths with regression targets ``u_t``."""

    x_t: np.ndarray
    u_t: np.ndarray
    t: np.ndarray

    def __len__(self):
        return self.x_t.shape[0]


def _pair_arrays(x0, x1):
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    x1 = np.atleast_2d(np.asarray(x1, dtype=np.float64))
    if x0.shape != x1.shape:
        raise DimensionMismatch(f"shapes {x0.shape} and {x1.shape} differ")
    return x0, x1


def sample_path_linear(x0, x1, t):
    x0, x1 = _pair_arrays(x0, x1)
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (x0.shape[0],)).copy()
    tt = t[:, None]
    return PathBatch((1.0 - tt) * x0 + tt * x1, x1 - x0, t)


def sample_path_spherical(x0, x1, t, radius=None):
    x0, x1 = _pair_arrays(x0, x1)
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (x0.shape[0],)).copy()
    x_t, u_t = geometry.geodesic(x0, x1, t, radius)
    return PathBatch(x_t, u_t, t)


def _project_inputs(variant, src, tgt):
    if variant.source_projection:
        src = geometry.project_to_sphere(src, variant.radius)
    if variant.target_projection:
        tgt = geometry.project_to_sphere(tgt, variant.radius)
    return src, tgt


def pair_batch(variant, src, tgt, coupler, rng):
    """Pair rows of ``src`` and ``tgt`` according to the variant's coupling.

    Returns the paired ``(x0, x1)`` arrays after any sphere projection.
    """
    src, tgt = _pair_arrays(src, tgt)
    src, tgt = _project_inputs(variant, src, tgt)
    if variant.metric is None:
        return src, tgt[rng.permutation(tgt.shape[0])]
    i, j = coupler.pair(src, tgt, variant.metric, rng)
    return src[i], tgt[j]


def make_training_batch(variant, src, tgt, coupler, rng, max_repair=10):
    """Build one batch of conditional path samples with one ``t ~ U[0, 1]`` per pair.

    For SFM, pairs that land (near-)antipodal get a fresh random target
    drawn from the same batch; this is retried up to ``max_repair`` times.
    """
    x0, x1 = pair_batch(variant, src, tgt, coupler, rng)
    t = rng.uniform(size=x0.shape[0])
    if not variant.spherical:
        return sample_path_linear(x0, x1, t)
    for _ in range(max_repair):
        try:
            return sample_path_spherical(x0, x1, t, variant.radius)
        except AntipodalPoints as exc:
            bad = np.asarray(exc.indices)
            x1 = x1.copy()
            x1[bad] = x1[rng.integers(0, x1.shape[0], size=bad.size)]
    return sample_path_spherical(x0, x1, t, variant.radius)


def regression_loss(batch, predictions):
    """Mean squared Euclidean distance between predictions and ``u_t``.

    The sphere inherits the ambient inner product on its tangent spaces, so
    this is also the Riemannian loss for SFM.
    """
    target = batch.u_t if isinstance(batch, PathBatch) else np.asarray(batch, dtype=np.float64)
    predictions = np.asarray(predictions, dtype=np.float64)
    if target.shape[0] != predictions.shape[0]:
        raise LengthMismatch(f"{target.shape[0]} targets vs {predictions.shape[0]} predictions")
    if target.shape != predictions.shape:
        raise DimensionMismatch(f"shapes {target.shape} and {predictions.shape} differ")
    diff = predictions - target
    return float(np.mean(np.sum(diff * diff, axis=1)))
