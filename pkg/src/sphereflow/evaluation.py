"""Sample-quality and robustness metrics, plus CSV output."""

import csv
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DimensionMismatch, EmptyBatch, ZeroVector
from .geometry import ZERO_NORM


def _batch(x, name):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[0] == 0:
        raise EmptyBatch(f"{name} is empty")
    return x


def energy_distance(a, b):
    """V-statistic energy distance ``2E|a-b| - E|a-a'| - E|b-b'|``.

    Uses all cross pairs, including the zero diagonal of the within-set
    terms. Clipped at zero against rounding.
    """
    a, b = _batch(a, "A"), _batch(b, "B")
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatch(f"dimension {a.shape[1]} != {b.shape[1]}")
    # fixed argument order makes the result bit-identical under swapping
    if (a.shape[0], a.tobytes()) > (b.shape[0], b.tobytes()):
        a, b = b, a
    ab = cdist(a, b).mean()
    aa = cdist(a, a).mean()
    bb = cdist(b, b).mean()
    return max(2.0 * ab - aa - bb, 0.0)


@dataclass(frozen=True)
class SweepRow:
    radius: float
    distortion: float


def projection_sweep(batch, radii):
    """Mean squared error of replacing each vector's norm by each radius.

    Projection keeps directions, so ``|x - r x/|x||^2 = (|x| - r)^2``.
    """
    batch = _batch(batch, "batch")
    s = np.linalg.norm(batch, axis=1)
    if np.any(s < ZERO_NORM):
        raise ZeroVector("cannot project zero vectors")
    rows = []
    for r in radii:
        if not r > 0:
            raise ValueError(f"radius must be positive, got {r}")
        proj = batch * (r / s)[:, None]
        err = np.sum((batch - proj) ** 2, axis=1)
        rows.append(SweepRow(float(r), float(err.mean())))
    return rows


def on_sphere_residual(batch, r):
    """Largest relative deviation ``| |x| - r | / r`` over the batch."""
    batch = _batch(batch, "batch")
    return float(np.max(np.abs(np.linalg.norm(batch, axis=1) - r)) / r)


def write_csv(path, rows, fieldnames=None):
    """Write dict rows with a header line; floats use ``repr`` precision."""
    rows = list(rows)
    if fieldnames is None:
        fieldnames = list(rows[0].keys()) if rows else []
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                             for k, v in row.items()})
