"""Training loop and experiment drivers built from an :class:`ExperimentConfig`.

Random streams are derived from ``cfg.seed`` by offset:
0 mixture means, 1 training set, 2 training loop, 3 held-out targets,
4 sampling, 5 fixed probe pairs.
"""

import logging
from dataclasses import dataclass, replace

import numpy as np

from . import geometry
from .datasets import norm_stats, random_vmf_mixture, sample_gaussian, sample_vmf_mixture, stream_rng
from .evaluation import energy_distance
from .flow import make_training_batch, sample_path_spherical
from .model import adam_step, ema_update, init_mlp, init_opt_state, loss_and_grad
from .sampler import SampleRunConfig, generate, network_field

log = logging.getLogger(__name__)

STREAM_MIXTURE, STREAM_TRAIN_SET, STREAM_TRAIN, STREAM_HELDOUT, STREAM_SAMPLE, STREAM_PROBE = range(6)


def target_spec(cfg):
    return random_vmf_mixture(cfg.d, cfg.n_components, cfg.kappa, stream_rng(cfg.seed, STREAM_MIXTURE),
                              radius=cfg.target_norm, norm_spread=cfg.target_norm_spread)


def training_set(cfg):
    return sample_vmf_mixture(target_spec(cfg), cfg.train_size, stream_rng(cfg.seed, STREAM_TRAIN_SET))


def heldout_targets(cfg, n):
    return sample_vmf_mixture(target_spec(cfg), n, stream_rng(cfg.seed, STREAM_HELDOUT))


@dataclass
class TrainResult:
    config: object
    params: object
    state: object
    log: list
    final_norm: float

    def checkpoint_config(self):
        out = self.config.to_mapping()
        out["final_norm"] = repr(self.final_norm)
        return out


def train(cfg, callback=None):
    """Fit the velocity field for ``cfg.train_iters`` Adam steps.

    The log holds one row every ``cfg.log_every`` iterations (and at
    iteration 1): the batch loss and a running average of it with
    smoothing 0.98.
    """
    variant = cfg.flow_variant()
    coupler = cfg.coupler()
    data = training_set(cfg)
    final_norm = norm_stats(data).mean
    rng = stream_rng(cfg.seed, STREAM_TRAIN)
    params = init_mlp(cfg.d, cfg.hidden, cfg.time_embed_dim, rng)
    state = init_opt_state(params, cfg.lr, (cfg.beta1, cfg.beta2), weight_decay=cfg.weight_decay,
                           ema_decay=cfg.ema_decay)
    rows = []
    smooth = None
    for it in range(1, cfg.train_iters + 1):
        src = sample_gaussian(cfg.batch_size, cfg.d, rng)
        tgt = data[rng.integers(0, data.shape[0], size=cfg.batch_size)]
        batch = make_training_batch(variant, src, tgt, coupler, rng)
        loss, grads = loss_and_grad(params, batch)
        if not np.isfinite(loss):
            raise FloatingPointError(f"loss became non-finite at iteration {it}")
        params, state = adam_step(state, params, grads)
        state = ema_update(state, params)
        smooth = loss if smooth is None else 0.98 * smooth + 0.02 * loss
        if it == 1 or it % cfg.log_every == 0 or it == cfg.train_iters:
            rows.append({"iter": it, "loss": loss, "loss_ema": smooth})
            if callback is not None:
                callback(it, loss, smooth)
    log.info("trained %s for %d iterations, final loss %.4g", cfg.variant, cfg.train_iters, smooth)
    return TrainResult(cfg, params, state, rows, final_norm)


def sample_config(cfg, final_norm, steps=None):
    variant = cfg.flow_variant()
    return SampleRunConfig(variant, steps or cfg.nfe, final_norm if variant.target_projection else None)


def to_eval_space(cfg, x, final_norm):
    """Targets and samples are compared at the dataset mean norm when the
    variant trains on projected targets, and as-is otherwise."""
    if cfg.flow_variant().target_projection:
        return geometry.rescale_to_norm(x, final_norm)
    return np.asarray(x, dtype=np.float64)


def evaluate(result, n=2000, field=None, use_ema=True):
    """Energy distances of model samples and of raw source samples to a
    held-out target batch, both measured in the variant's evaluation space.

    Returns a dict with ``model``, ``baseline``, ``ratio`` and the
    pre-rescale on-sphere residual (NaN for Euclidean variants).
    """
    cfg = result.config
    params = result.state.ema if use_ema else result.params
    field = field or network_field(params)
    scfg = sample_config(cfg, result.final_norm)
    raw = generate(field, n, cfg.d, scfg, stream_rng(cfg.seed, STREAM_SAMPLE), rescale=False)
    variant = scfg.variant
    residual = float("nan")
    if variant.spherical:
        residual = float(np.max(np.abs(np.linalg.norm(raw, axis=1) - variant.radius)) / variant.radius)
    samples = to_eval_space(cfg, raw, result.final_norm)
    target = to_eval_space(cfg, heldout_targets(cfg, n), result.final_norm)
    src = sample_gaussian(n, cfg.d, stream_rng(cfg.seed, STREAM_SAMPLE))
    if variant.source_projection:
        src = geometry.project_to_sphere(src, variant.radius)
    src = to_eval_space(cfg, src, result.final_norm)
    model = energy_distance(samples, target)
    baseline = energy_distance(src, target)
    return {"model": model, "baseline": baseline, "ratio": model / baseline, "sphere_residual": residual}


def probe_target_speed(cfg, radius, n=512):
    """Mean SFM target speed ``|u_t|`` on a fixed set of direction pairs and
    times, projected to ``radius``."""
    rng = stream_rng(cfg.seed, STREAM_PROBE)
    x0 = sample_gaussian(n, cfg.d, rng)
    x1 = sample_vmf_mixture(target_spec(cfg), n, rng)
    t = rng.uniform(size=n)
    batch = sample_path_spherical(geometry.project_to_sphere(x0, radius),
                                  geometry.project_to_sphere(x1, radius), t, radius)
    return float(np.mean(np.linalg.norm(batch.u_t, axis=1)))


def ablate_radius(cfg, radii, n_eval=2000):
    """Train one SFM model per radius with shared seeds and report the
    energy distance to held-out targets at the common dataset norm."""
    rows = []
    for r in radii:
        if not r > 0:
            raise ValueError(f"radius must be positive, got {r}")
        sub = replace(cfg, variant="sfm", radius=float(r), source_projection=True, target_projection=True)
        result = train(sub)
        scores = evaluate(result, n_eval)
        rows.append({
            "radius": float(r),
            "energy_distance": scores["model"],
            "baseline_energy_distance": scores["baseline"],
            "final_loss": result.log[-1]["loss_ema"],
            "mean_target_speed": probe_target_speed(cfg, r),
        })
    return rows
