"""Experiment configuration read from flat ``key = value`` files."""

from dataclasses import asdict, dataclass, fields, replace

from .datasets import expected_gaussian_norm
from .errors import ConfigError, InvalidVariant
from .flow import Coupler, FlowVariant, Variant


def parse_kv(text):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        out[key.strip()] = value.strip()
    return out


def _bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text):
    return tuple(int(p) for p in str(text).replace(",", " ").split())


def _optional_int(text):
    return None if str(text).strip().lower() in ("", "none") else int(text)


def _radius(text):
    return "auto" if str(text).strip().lower() == "auto" else float(text)


def _optional_bool(text):
    return None if str(text).strip().lower() in ("", "none", "auto") else _bool(text)


_PARSERS = {
    "variant": lambda s: Variant(str(s).strip().lower()).value,
    "source_projection": _optional_bool,
    "target_projection": _optional_bool,
    "d": int,
    "radius": _radius,
    "n_components": int,
    "kappa": float,
    "target_norm": float,
    "target_norm_spread": float,
    "train_size": int,
    "batch_size": int,
    "ot_batch_size": _optional_int,
    "coupling_mode": str,
    "sinkhorn_eps": float,
    "sinkhorn_iters": int,
    "sinkhorn_tol": float,
    "lr": float,
    "beta1": float,
    "beta2": float,
    "weight_decay": float,
    "ema_decay": float,
    "train_iters": int,
    "log_every": int,
    "hidden": _ints,
    "time_embed_dim": int,
    "nfe": int,
    "seed": int,
    "out": str,
}


@dataclass(frozen=True)
class ExperimentConfig:
    variant: str = "sfm"
    source_projection: bool | None = None
    target_projection: bool | None = None
    d: int = 16
    radius: object = "auto"
    n_components: int = 4
    kappa: float = 30.0
    target_norm: float = 4.0
    target_norm_spread: float = 0.1
    train_size: int = 20000
    batch_size: int = 256
    ot_batch_size: int | None = None
    coupling_mode: str = "sample"
    sinkhorn_eps: float = 0.1
    sinkhorn_iters: int = 1000
    sinkhorn_tol: float = 1e-6
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.0
    ema_decay: float = 0.999
    train_iters: int = 2000
    log_every: int = 10
    hidden: tuple = (256, 256, 256)
    time_embed_dim: int = 64
    nfe: int = 100
    seed: int = 0
    out: str = "runs/default"

    def __post_init__(self):
        positive = ["d", "n_components", "target_norm", "train_size", "batch_size", "sinkhorn_eps",
                    "sinkhorn_iters", "sinkhorn_tol", "lr", "train_iters", "log_every", "time_embed_dim", "nfe"]
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name}: must be positive, got {getattr(self, name)!r}")
        if self.radius != "auto" and not self.radius > 0:
            raise ConfigError(f"radius: must be positive or 'auto', got {self.radius!r}")
        if self.kappa < 0 or self.target_norm_spread < 0 or self.weight_decay < 0:
            raise ConfigError("kappa, target_norm_spread and weight_decay must be nonnegative")
        if self.ot_batch_size is not None and self.ot_batch_size < 1:
            raise ConfigError("ot_batch_size: must be positive")
        if not 0.0 <= self.ema_decay <= 1.0:
            raise ConfigError("ema_decay: must lie in [0, 1]")
        if self.coupling_mode not in ("sample", "exact"):
            raise ConfigError("coupling_mode: expected 'sample' or 'exact'")
        if self.d < 2:
            raise ConfigError("d: the vMF target needs d >= 2")
        if any(h < 1 for h in self.hidden):
            raise ConfigError("hidden: widths must be positive")
        if self.time_embed_dim % 2:
            raise ConfigError("time_embed_dim: must be even")
        try:
            self.flow_variant()
        except InvalidVariant as exc:
            raise ConfigError(f"variant/source_projection/target_projection: {exc}") from None

    @classmethod
    def from_mapping(cls, mapping):
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for key, raw in mapping.items():
            if key not in known:
                raise ConfigError(f"{key}: unknown config key")
            try:
                kwargs[key] = _PARSERS[key](raw) if isinstance(raw, str) else raw
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}") from None
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_mapping(parse_kv(fh.read()))

    def with_overrides(self, **kw):
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    @property
    def resolved_radius(self):
        return expected_gaussian_norm(self.d) if self.radius == "auto" else float(self.radius)

    def flow_variant(self):
        kind = Variant(self.variant)
        default = kind is Variant.SFM
        src = default if self.source_projection is None else self.source_projection
        tgt = default if self.target_projection is None else self.target_projection
        return FlowVariant(kind, src, tgt, self.resolved_radius)

    def coupler(self):
        return Coupler(self.sinkhorn_eps, self.sinkhorn_iters, self.sinkhorn_tol, self.coupling_mode,
                       self.ot_batch_size)

    def to_mapping(self):
        out = {}
        for key, value in asdict(self).items():
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            out[key] = "none" if value is None else str(value)
        return out
