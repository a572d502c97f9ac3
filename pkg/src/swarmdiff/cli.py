"""Command-line entry point: ``swarmdiff <simulate|features|similarity|classify|report>``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import harness
from .config import ConfigError, load_config


def _simulate(args):
    return harness.generate_dataset(load_config(args.config), args.out)


def _features(args):
    return harness.compute_features(load_config(args.config), args.out)


def _similarity(args):
    paths = harness.run_similarity(load_config(args.config), args.out)
    return {"reports": len(paths)}


def _classify(args):
    results = harness.run_classification(load_config(args.config), args.out)
    return {fs: {"train_mean": r["train_mean"], "test_mean": r["test_mean"]} for fs, r in results.items()}


def _report(args):
    summary = harness.report(args.out)
    return {"sources": len(summary["sources"]), "missing": summary["missing"]}


COMMANDS = {
    "simulate": (_simulate, "generate the trajectory dataset"),
    "features": (_features, "extract (or reuse cached) feature series"),
    "similarity": (_similarity, "write pairwise similarity reports"),
    "classify": (_classify, "train and evaluate the SOM classifiers"),
    "report": (_report, "consolidate reports into summary.json / summary.txt"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swarmdiff", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="JSON experiment config (defaults if omitted)")
        p.add_argument("--out", required=True, help="artifact directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        result = COMMANDS[args.command][0](args)
    except (ConfigError, FileNotFoundError, OSError, ValueError) as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc), "command": args.command}, sys.stderr)
        sys.stderr.write("\n")
        return 2 if isinstance(exc, ConfigError) else 1
    json.dump(result, sys.stdout)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
