"""Command-line driver.

Exit codes: 0 success, 1 usage or config error, 2 data error (unreadable
or malformed input files), 3 numeric failure.
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import training
from .config import ExperimentConfig
from .datasets import load_vectors, norm_stats, save_vectors, stream_rng
from .errors import ConfigError, FormatError, NonFiniteActivation, NonFiniteState
from .evaluation import energy_distance, on_sphere_residual, projection_sweep, write_csv
from .model import load_checkpoint, save_checkpoint
from .sampler import generate, network_field

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("sphereflow")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text):
    try:
        return [float(p) for p in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}")


def _load_config(args):
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    return cfg.with_overrides(seed=args.seed, out=args.out)


def _out_dir(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train(args):
    cfg = _load_config(args)
    out = _out_dir(cfg.out)
    result = training.train(cfg)
    save_checkpoint(out / "checkpoint.sfck", result.params, result.state.ema, result.checkpoint_config())
    write_csv(out / "train_log.csv", result.log, ["iter", "loss", "loss_ema"])
    print(f"wrote {out / 'checkpoint.sfck'} and {out / 'train_log.csv'}")
    return EXIT_OK


def cmd_sample(args):
    if args.n < 1:
        raise ConfigError("n: must be at least 1")
    params, ema, echo = load_checkpoint(args.checkpoint)
    cfg = ExperimentConfig.from_mapping({k: v for k, v in echo.items() if k != "final_norm"})
    cfg = cfg.with_overrides(seed=args.seed, out=args.out)
    final_norm = float(echo["final_norm"]) if "final_norm" in echo else None
    scfg = training.sample_config(cfg, final_norm, args.steps)
    weights = ema if (ema is not None and not args.no_ema) else params
    seed = cfg.seed if args.seed is None else args.seed
    samples = generate(network_field(weights), args.n, cfg.d, scfg, stream_rng(seed, training.STREAM_SAMPLE),
                       rescale=not args.no_rescale)
    out = _out_dir(cfg.out)
    save_vectors(out / "samples.sfv1", samples)
    print(f"wrote {args.n} samples to {out / 'samples.sfv1'}")
    return EXIT_OK


def cmd_eval(args):
    a = load_vectors(args.samples)
    b = load_vectors(args.reference)
    rows = [
        {"metric": "energy_distance", "value": energy_distance(a, b)},
        {"metric": "samples_mean_norm", "value": norm_stats(a).mean},
        {"metric": "reference_mean_norm", "value": norm_stats(b).mean},
    ]
    if args.radius is not None:
        rows.append({"metric": "on_sphere_residual", "value": on_sphere_residual(a, args.radius)})
    out = _out_dir(args.out or ".")
    write_csv(out / "eval.csv", rows, ["metric", "value"])
    for row in rows:
        print(f"{row['metric']},{row['value']!r}")
    return EXIT_OK


def cmd_analyze(args):
    x = load_vectors(args.vectors)
    stats = norm_stats(x)
    radii = args.radii if args.radii else list(np.linspace(0.5, 1.5, 21) * stats.mean)
    rows = [{"kind": "norm_stats", "radius": "", "value": "", **stats.as_row()}]
    for row in projection_sweep(x, radii):
        rows.append({"kind": "sweep", "radius": row.radius, "value": row.distortion})
    out = _out_dir(args.out or ".")
    write_csv(out / "analysis.csv", rows, ["kind", "radius", "value", "count", "mean", "std", "min", "max"])
    print(f"mean norm {stats.mean:.6g} (std {stats.std:.3g}); wrote {out / 'analysis.csv'}")
    return EXIT_OK


def cmd_ablate_radius(args):
    cfg = _load_config(args)
    if any(not r > 0 for r in args.radii):
        raise ConfigError("radii: every radius must be positive")
    rows = training.ablate_radius(cfg, args.radii, args.n_eval)
    out = _out_dir(cfg.out)
    write_csv(out / "ablate_radius.csv", rows)
    print(f"wrote {len(rows)} rows to {out / 'ablate_radius.csv'}")
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="sphereflow", description="Geometry-aware flow matching on hyperspheres.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="flat 'key = value' config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("train", help="train a velocity field")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="draw samples from a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("-n", type=int, default=1000)
    p.add_argument("--steps", type=int, help="Euler steps (defaults to the trained nfe)")
    p.add_argument("--no-rescale", action="store_true", help="skip rescaling to the dataset mean norm")
    p.add_argument("--no-ema", action="store_true", help="use raw instead of EMA weights")
    common(p, config=False)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval", help="compare two SFV1 vector files")
    p.add_argument("samples")
    p.add_argument("reference")
    p.add_argument("--radius", type=float, help="also report the on-sphere residual at this radius")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze", help="norm statistics and projection sweep of an SFV1 file")
    p.add_argument("vectors")
    p.add_argument("--radii", type=_floats)
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("ablate-radius", help="train SFM at several radii")
    common(p)
    p.add_argument("--radii", type=_floats, required=True)
    p.add_argument("--n-eval", type=int, default=2000)
    p.set_defaults(func=cmd_ablate_radius)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NonFiniteState, NonFiniteActivation, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
