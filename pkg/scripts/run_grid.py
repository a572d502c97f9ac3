"""Run the whole pipeline (simulate, similarity, classify, report) for one config.

    python scripts/run_grid.py configs/desk.json runs/desk
"""

import argparse
import logging
import time

from swarmdiff import harness
from swarmdiff.config import load_config


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("config")
    parser.add_argument("out")
    parser.add_argument("--skip-classify", action="store_true")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    config = load_config(args.config)
    t0 = time.time()
    print("dataset:", harness.generate_dataset(config, args.out), f"{time.time() - t0:.0f}s")
    print("features:", harness.compute_features(config, args.out), f"{time.time() - t0:.0f}s")
    harness.run_similarity(config, args.out)
    print(f"similarity done {time.time() - t0:.0f}s")
    if not args.skip_classify:
        harness.run_classification(config, args.out)
        print(f"classification done {time.time() - t0:.0f}s")
    harness.report(args.out)
    print((open(f"{args.out}/summary.txt").read().split("classification")[-1]))


if __name__ == "__main__":
    main()
