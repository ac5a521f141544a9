"""Command-line entry point: ``dptraj {calibrate,synthesize,evaluate,run,toy}``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import io
from .geo import BoundingBox
from .metrics import evaluate
from .pipeline import (FIELD_TYPES, RunConfig, budget_ledger, calibrate_dataset, parse_value,
                       run, synthesize, write_top_n)
from .privacy import NoiseSource
from .toydata import hotspot_trips

log = logging.getLogger("dptraj")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    for f in dataclasses.fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.type == "bool":
            p.add_argument(flag, dest=f.name, action="store_const", const="true",
                           default=None)
        else:
            p.add_argument(flag, dest=f.name, default=None, metavar=f.name.upper())
    p.add_argument("--i-know-this-is-not-private", dest="ack_not_private",
                   action="store_true", help="required together with --zero-noise")


def _config_from(args) -> RunConfig:
    overrides = {name: parse_value(name, getattr(args, name))
                 for name in FIELD_TYPES if getattr(args, name, None) is not None}
    if overrides.get("zero_noise") and not args.ack_not_private:
        raise ValueError("--zero-noise requires --i-know-this-is-not-private")
    if args.config:
        cfg = RunConfig.from_file(args.config, **overrides)
    else:
        cfg = RunConfig(**overrides)
    if cfg.zero_noise and not args.ack_not_private:
        raise ValueError("zero_noise requires --i-know-this-is-not-private")
    return cfg


def _load(cfg: RunConfig):
    if cfg.input is None:
        raise ValueError("no input dataset given (--input or 'input' config key)")
    return io.load_dataset(cfg.input, cfg.format, cfg.bounding_box(), cfg.on_outside)


def cmd_calibrate(args) -> None:
    cfg = _config_from(args)
    loaded = _load(cfg)
    ids, seqs, rejected = calibrate_dataset(loaded.trajectories, cfg.grid(), cfg.on_outside)
    with open(args.output, "w") as fh:
        io.write_calibrated(ids, seqs, fh)
    print(f"calibrated {len(seqs)} trajectories "
          f"(rejected {loaded.rejected_outside + rejected}, "
          f"malformed {loaded.skipped_malformed})")


def cmd_synthesize(args) -> None:
    cfg = _config_from(args)
    loaded = _load(cfg)
    _, seqs, _ = calibrate_dataset(loaded.trajectories, cfg.grid(), cfg.on_outside)
    syn, _ = synthesize(seqs, cfg, NoiseSource(cfg.seed, zero_noise=cfg.zero_noise))
    with open(args.output, "w") as fh:
        io.write_canonical(syn.trajectories, fh)
    print(json.dumps(budget_ledger(cfg)))
    print(f"wrote {len(syn)} synthetic trajectories to {args.output}")


def cmd_evaluate(args) -> None:
    cfg = _config_from(args)
    real = _load(cfg).trajectories
    syn = io.load_dataset(args.synthetic, "canonical", cfg.bounding_box()).trajectories
    report = evaluate(real, syn, cfg.eval_config())
    out = Path(args.output)
    out.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    write_top_n(report.top_n_proportions, out.with_suffix(".top_n.tsv"))
    for name in report.SCALARS:
        print(f"{name}\t{getattr(report, name):.6f}")


def cmd_run(args) -> None:
    cfg = _config_from(args)
    record = run(cfg)
    for name, stats in record.aggregate.items():
        print(f"{name}\tmean={stats['mean']:.6f}\tmedian={stats['median']:.6f}")


def cmd_toy(args) -> None:
    bbox = BoundingBox.from_bounds(*parse_value("bbox", args.bbox))
    trips = hotspot_trips(args.n, bbox, seed=args.seed)
    with open(args.output, "w") as fh:
        io.write_canonical(trips, fh)
    print(f"wrote {len(trips)} toy trajectories to {args.output}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dptraj",
                                     description="Differentially private trajectory synthesis")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="discretize raw trajectories onto the grid")
    _add_config_flags(p)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("synthesize", help="build the private model and write one synthetic dataset")
    _add_config_flags(p)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("evaluate", help="compare a synthetic dataset against the real one")
    _add_config_flags(p)
    p.add_argument("--synthetic", required=True, help="canonical-format synthetic dataset")
    p.add_argument("-o", "--output", required=True, help="JSON report path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", help="full pipeline with repeats and aggregation")
    _add_config_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("toy", help="write a toy hotspot dataset in canonical format")
    p.add_argument("-n", type=int, default=1000)
    p.add_argument("--bbox", default=" ".join(map(str, RunConfig.bbox)))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_toy)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ValueError, OSError) as exc:
        print(f"dptraj: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
