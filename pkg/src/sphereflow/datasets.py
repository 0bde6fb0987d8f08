"""Source and target distributions, norm statistics, and SFV1 vector files."""

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadMagic, EmptyBatch, TruncatedFile

SFV1_MAGIC = b"SFV1"
_SFV1_HEADER = struct.Struct("<4sII")


def stream_rng(seed, stream=0):
    """Generator for parallel stream ``stream`` of base ``seed`` (seed + stream)."""
    return np.random.default_rng(int(seed) + int(stream))


def sample_gaussian(n, d, rng):
    return rng.standard_normal((n, d))


def expected_gaussian_norm(d):
    """Large-d mean of the chi distribution with ``d`` degrees of freedom."""
    if d < 1:
        raise ValueError("d must be >= 1")
    return math.sqrt(d - 0.5)


@dataclass
class VmfMixtureSpec:
    """Mixture of von Mises-Fisher components on the radius-``radius`` sphere.

    ``norm_spread`` > 0 multiplies every sample's norm by an independent
    log-normal factor ``exp(norm_spread * z)``, giving an unprojected
    dataset whose directions follow the mixture but whose norms vary.
    """

    means: np.ndarray
    kappas: np.ndarray
    weights: np.ndarray
    radius: float = 1.0
    norm_spread: float = 0.0

    def __post_init__(self):
        self.means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        k = self.means.shape[0]
        self.kappas = np.broadcast_to(np.asarray(self.kappas, dtype=np.float64), (k,)).copy()
        self.weights = np.broadcast_to(np.asarray(self.weights, dtype=np.float64), (k,)).copy()
        norms = np.linalg.norm(self.means, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ValueError("mixture mean directions must be unit vectors")
        if np.any(self.kappas < 0):
            raise ValueError("concentrations must be nonnegative")
        if np.any(self.weights <= 0):
            raise ValueError("mixture weights must be positive")
        self.weights = self.weights / self.weights.sum()
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if self.means.shape[1] < 2:
            raise ValueError("vMF sampling needs d >= 2")

    @property
    def dim(self):
        return self.means.shape[1]


def random_vmf_mixture(d, n_components, kappa, rng, radius=1.0, norm_spread=0.0):
    """Mixture with equal weights and uniformly random mean directions."""
    means = rng.standard_normal((n_components, d))
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    return VmfMixtureSpec(means, kappa, np.ones(n_components), radius, norm_spread)


def _sample_vmf_cosines(kappa, d, n, rng):
    # Wood (1994) rejection sampler for w = <x, mu>.
    m = d - 1
    b = m / (math.sqrt(4.0 * kappa**2 + m**2) + 2.0 * kappa)
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + m * math.log(1.0 - x0**2)
    out = np.empty(n)
    filled = 0
    while filled < n:
        k = n - filled
        z = rng.beta(m / 2.0, m / 2.0, size=k)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        u = rng.uniform(size=k)
        ok = kappa * w + m * np.log1p(-x0 * w) - c >= np.log(u)
        acc = w[ok]
        out[filled:filled + acc.size] = acc
        filled += acc.size
    return out


def sample_vmf(mu, kappa, n, rng):
    """``n`` unit vectors from vMF(mu, kappa); ``kappa = 0`` is uniform."""
    mu = np.asarray(mu, dtype=np.float64)
    d = mu.shape[0]
    w = _sample_vmf_cosines(kappa, d, n, rng)
    v = rng.standard_normal((n, d))
    v -= np.outer(v @ mu, mu)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return w[:, None] * mu + np.sqrt(np.clip(1.0 - w * w, 0.0, None))[:, None] * v


def sample_vmf_mixture(spec, n, rng):
    comp = rng.choice(len(spec.weights), size=n, p=spec.weights)
    out = np.empty((n, spec.dim))
    for k in range(len(spec.weights)):
        idx = np.flatnonzero(comp == k)
        if idx.size:
            out[idx] = sample_vmf(spec.means[k], spec.kappas[k], idx.size, rng)
    norms = np.full(n, spec.radius)
    if spec.norm_spread > 0:
        norms = norms * np.exp(spec.norm_spread * rng.standard_normal(n))
    return out * norms[:, None]


@dataclass(frozen=True)
class NormStats:
    mean: float
    std: float
    min: float
    max: float
    count: int

    def as_row(self):
        return {"count": self.count, "mean": self.mean, "std": self.std, "min": self.min, "max": self.max}


def norm_stats(batch):
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if batch.shape[0] == 0:
        raise EmptyBatch("norm statistics of an empty batch")
    s = np.linalg.norm(batch, axis=1)
    mean = float(s.mean())
    # clamp away rounding that would put the mean outside [min, max]
    mean = min(max(mean, float(s.min())), float(s.max()))
    return NormStats(mean, float(s.std()), float(s.min()), float(s.max()), int(s.size))


def save_vectors(path, batch):
    """Write ``batch`` as SFV1: magic, u32 count, u32 dim, then float32 LE rows."""
    arr = np.atleast_2d(np.asarray(batch))
    count, dim = arr.shape
    payload = np.ascontiguousarray(arr, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_SFV1_HEADER.pack(SFV1_MAGIC, count, dim))
        fh.write(payload.tobytes())


def load_vectors(path):
    """Read an SFV1 file into a float64 array of shape (count, dim)."""
    with open(Path(path), "rb") as fh:
        header = fh.read(_SFV1_HEADER.size)
        if len(header) < 4 or header[:4] != SFV1_MAGIC:
            raise BadMagic(f"{path}: not an SFV1 file")
        if len(header) < _SFV1_HEADER.size:
            raise TruncatedFile(f"{path}: header cut short")
        _, count, dim = _SFV1_HEADER.unpack(header)
        nbytes = count * dim * 4
        body = fh.read(nbytes)
    if len(body) < nbytes:
        raise TruncatedFile(f"{path}: expected {nbytes} payload bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<f4").reshape(count, dim).astype(np.float64)
