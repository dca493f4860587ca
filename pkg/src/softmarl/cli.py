"""Command-line entry point: ``softmarl {train,analyze,oracle}``."""
from __future__ import annotations

import argparse
import logging
import sys

from .config import ALGORITHMS, RunConfig, load_config


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="softmarl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run seeded trials and write CSV/JSON/PNG outputs")
    train.add_argument("--algo", choices=ALGORITHMS, required=True)
    train.add_argument("--config", help="flat 'key = value' config file")
    train.add_argument("--trials", type=int)
    train.add_argument("--seed", type=int, help="base seed; trial k uses seed + k")
    train.add_argument("--out", required=True, help="output directory")
    train.add_argument("--epochs", type=int)
    train.add_argument("--steps", type=int, help="steps per epoch")
    train.add_argument("--workers", type=int, help="parallel trials (default: CPU count, capped by MASOFTQ_THREADS)")
    train.add_argument("--no-figures", action="store_true")

    analyze = sub.add_parser("analyze", help="recompute summary.json from trial CSVs")
    analyze.add_argument("--out", required=True)
    analyze.add_argument("--no-figures", action="store_true")

    oracle = sub.add_parser("oracle", help="run the verification oracles and print pass/fail")
    oracle.add_argument("--quick", action="store_true", help="smaller instance counts")
    return parser


def _train(args) -> int:
    from .harness import run_experiment

    config = load_config(args.config) if args.config else RunConfig()
    overrides = {"algorithm": args.algo, "output_dir": args.out}
    for key, value in (("trials", args.trials), ("base_seed", args.seed), ("epochs", args.epochs),
                       ("steps_per_epoch", args.steps)):
        if value is not None:
            overrides[key] = value
    config = config.replace(**overrides)
    summary, results = run_experiment(config, workers=args.workers, figures=not args.no_figures)
    failed = sum(r.failed for r in results)
    print(f"{config.algorithm}: {summary.trials} trials, convergence_rate={summary.convergence_rate:.3f}, "
          f"failed={failed}, outputs in {config.output_dir}")
    return 0


def _analyze(args) -> int:
    from .harness import analyze

    summary = analyze(args.out, figures=not args.no_figures)
    print(f"{summary.algorithm}: {summary.trials} trials, convergence_rate={summary.convergence_rate:.3f}")
    return 0


def _oracle(args) -> int:
    from .verify import run_all

    results = run_all(quick=args.quick)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return {"train": _train, "analyze": _analyze, "oracle": _oracle}[args.command](args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
