"""Velocity-field MLP ``v(x_t, t)`` with hand-written backprop, Adam and EMA.

Layer ``l`` computes ``h @ W[l] + b[l]``; every layer but the last is
followed by SiLU. The network input is ``[x_t, time_embedding(t)]``.
"""

import struct
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from .config import parse_kv
from .errors import (
    BadCheckpoint,
    BadMagic,
    ConfigError,
    EmptyBatch,
    NonFiniteActivation,
    OddDim,
    ShapeMismatch,
    TruncatedFile,
)

CHECKPOINT_MAGIC = b"SFCK"
CHECKPOINT_VERSION = 1


def time_embedding(t, dim=64):
    """Sinusoidal features ``[sin(w_k t) | cos(w_k t)]`` for ``k < dim/2``
    with ``w_k = 2*pi * 10000**(-k / (dim/2 - 1))``.

    ``t`` may be a scalar (returns shape ``(dim,)``) or a vector (returns
    ``(n, dim)``).
    """
    if dim < 2 or dim % 2:
        raise OddDim(f"time embedding dim must be even and >= 2, got {dim}")
    half = dim // 2
    if half == 1:
        freqs = np.array([2.0 * np.pi])
    else:
        freqs = 2.0 * np.pi * np.exp(-np.arange(half) * np.log(1e4) / (half - 1))
    t = np.asarray(t, dtype=np.float64)
    angles = t[..., None] * freqs
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=-1)


@dataclass
class MlpParams:
    weights: list
    biases: list
    time_embed_dim: int = 64

    @property
    def widths(self):
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def dim(self):
        return self.weights[-1].shape[1]

    def arrays(self):
        """Parameter arrays in declared order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @classmethod
    def from_arrays(cls, arrays, time_embed_dim):
        return cls(list(arrays[0::2]), list(arrays[1::2]), time_embed_dim)

    def map(self, fn, *others):
        arrays = [fn(a, *(o.arrays()[k] for o in others)) for k, a in enumerate(self.arrays())]
        return MlpParams.from_arrays(arrays, self.time_embed_dim)

    def copy(self):
        return self.map(np.copy)

    def zeros_like(self):
        return self.map(np.zeros_like)

    def check_compatible(self, other):
        if [a.shape for a in self.arrays()] != [a.shape for a in other.arrays()]:
            raise ShapeMismatch("parameter shapes differ")

    def is_finite(self):
        return all(np.all(np.isfinite(a)) for a in self.arrays())


def init_mlp(d, hidden=(256, 256, 256), time_embed_dim=64, rng=None, zero_last=True):
    """Fan-in scaled uniform init; the output layer starts at zero unless
    ``zero_last`` is False."""
    rng = np.random.default_rng(0) if rng is None else rng
    widths = [d + time_embed_dim, *hidden, d]
    weights, biases = [], []
    for k, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        bound = 1.0 / np.sqrt(fan_in)
        last = k == len(widths) - 2
        if last and zero_last:
            weights.append(np.zeros((fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        else:
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(rng.uniform(-bound, bound, size=fan_out))
    return MlpParams(weights, biases, time_embed_dim)


def _silu(z):
    return z * expit(z)


def _inputs(params, x, t):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] + params.time_embed_dim != params.weights[0].shape[0]:
        raise ShapeMismatch(
            f"input dim {x.shape[1]} does not match network input {params.weights[0].shape[0]}"
        )
    t = np.broadcast_to(np.asarray(t, dtype=np.float64), (x.shape[0],))
    return np.concatenate([x, time_embedding(t, params.time_embed_dim)], axis=1), single


def _forward(params, h):
    pre, acts = [], [h]
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        if k < last:
            pre.append(z)
            h = _silu(z)
            acts.append(h)
        else:
            h = z
    return h, pre, acts


def forward(params, x, t):
    """Evaluate the velocity field at points ``x`` (``(d,)`` or ``(n, d)``) and times ``t``."""
    h, single = _inputs(params, x, t)
    out, _, _ = _forward(params, h)
    if not np.all(np.isfinite(out)):
        raise NonFiniteActivation("network produced NaN or Inf")
    return out[0] if single else out


def loss_and_grad(params, batch):
    """Mean squared error against ``batch.u_t`` and its exact gradient.

    Returns ``(loss, grads)`` where ``grads`` is an :class:`MlpParams` of
    the same shapes as ``params``.
    """
    if len(batch) == 0:
        raise EmptyBatch("loss of an empty batch")
    h, _ = _inputs(params, batch.x_t, batch.t)
    out, pre, acts = _forward(params, h)
    n = out.shape[0]
    resid = out - batch.u_t
    loss = float(np.sum(resid * resid) / n)

    delta = 2.0 * resid / n
    gw = [None] * len(params.weights)
    gb = [None] * len(params.weights)
    for k in range(len(params.weights) - 1, -1, -1):
        gw[k] = acts[k].T @ delta
        gb[k] = delta.sum(axis=0)
        if k == 0:
            break
        z = pre[k - 1]
        s = expit(z)
        delta = (delta @ params.weights[k].T) * (s * (1.0 + z * (1.0 - s)))
    return loss, MlpParams(gw, gb, params.time_embed_dim)


@dataclass
class OptState:
    """Adam moments, step counter and EMA shadow weights."""

    m: MlpParams
    v: MlpParams
    ema: MlpParams
    step: int = 0
    lr: float = 2e-4
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.0
    ema_decay: float = 0.9999


def init_opt_state(params, lr=2e-4, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0, ema_decay=0.9999):
    return OptState(params.zeros_like(), params.zeros_like(), params.copy(), 0, lr, tuple(betas), eps,
                    weight_decay, ema_decay)


def adam_step(state, params, grads):
    """One bias-corrected Adam update. Returns new ``(params, state)``;
    inputs are left untouched. ``weight_decay`` is decoupled (AdamW)."""
    params.check_compatible(grads)
    params.check_compatible(state.m)
    b1, b2 = state.betas
    step = state.step + 1
    m = state.m.map(lambda m, g: b1 * m + (1.0 - b1) * g, grads)
    v = state.v.map(lambda v, g: b2 * v + (1.0 - b2) * g * g, grads)
    c1 = 1.0 - b1**step
    c2 = 1.0 - b2**step
    lr, eps, wd = state.lr, state.eps, state.weight_decay

    def update(p, m_, v_):
        return p - lr * ((m_ / c1) / (np.sqrt(v_ / c2) + eps) + wd * p)

    new_params = params.map(update, m, v)
    return new_params, replace(state, m=m, v=v, step=step)


def ema_update(state, params, decay=None):
    """``ema <- decay * ema + (1 - decay) * params``, returning a new state."""
    params.check_compatible(state.ema)
    d = state.ema_decay if decay is None else decay
    ema = state.ema.map(lambda e, p: d * e + (1.0 - d) * p, params)
    return replace(state, ema=ema)


# Checkpoint layout, all integers u32 little-endian:
#   b"SFCK" | version | config_len | config (UTF-8 "key = value" lines)
#   | time_embed_dim | n_widths | widths... | flags (bit 0: EMA block present)
#   | params as <f8 in declared order (W0 row-major, b0, W1, b1, ...)
#   | EMA params in the same order, if flagged


def save_checkpoint(path, params, ema=None, config=None):
    config = config or {}
    text = "".join(f"{k} = {v}\n" for k, v in config.items()).encode("utf-8")
    widths = params.widths
    parts = [
        CHECKPOINT_MAGIC,
        struct.pack("<II", CHECKPOINT_VERSION, len(text)),
        text,
        struct.pack("<II", params.time_embed_dim, len(widths)),
        struct.pack(f"<{len(widths)}I", *widths),
        struct.pack("<I", 1 if ema is not None else 0),
    ]
    for block in (params, ema):
        if block is None:
            continue
        params.check_compatible(block)
        parts.extend(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in block.arrays())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise TruncatedFile("checkpoint ends early")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, count=1):
        vals = struct.unpack(f"<{count}I", self.take(4 * count))
        return vals[0] if count == 1 else list(vals)


def load_checkpoint(path):
    """Return ``(params, ema_or_None, config_dict)`` from an SFCK file."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CHECKPOINT_MAGIC:
        raise BadMagic(f"{path}: not a checkpoint")
    rd = _Reader(data)
    rd.take(4)
    version = rd.u32()
    if version != CHECKPOINT_VERSION:
        raise BadCheckpoint(f"unsupported checkpoint version {version}")
    try:
        config = parse_kv(rd.take(rd.u32()).decode("utf-8"))
    except (UnicodeDecodeError, ConfigError) as exc:
        raise BadCheckpoint(f"unreadable config block: {exc}") from None
    ted = rd.u32()
    n_widths = rd.u32()
    if n_widths < 2:
        raise BadCheckpoint("checkpoint declares fewer than two layer widths")
    widths = rd.u32(n_widths)
    flags = rd.u32()

    def read_block():
        arrays = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            arrays.append(np.frombuffer(rd.take(8 * fan_in * fan_out), "<f8").reshape(fan_in, fan_out).copy())
            arrays.append(np.frombuffer(rd.take(8 * fan_out), "<f8").copy())
        return MlpParams.from_arrays(arrays, ted)

    params = read_block()
    ema = read_block() if flags & 1 else None
    if rd.pos != len(data):
        raise BadCheckpoint("trailing bytes after checkpoint payload")
    return params, ema, config
