"""Single-instrument simulation grid: bias, deviation quantiles, KS dominance, AR containment.

Usage: python scripts/run_grid.py [--draws N] [--seed S] [--out DIR]
"""

import argparse
import sys

from unbiased_iv.cli import main


def parse(argv):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--draws", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="results/grid")
    p.add_argument("--workers", type=int, default=1)
    return p.parse_args(argv)


if __name__ == "__main__":
    a = parse(sys.argv[1:])
    sys.exit(main(["grid", "--draws", str(a.draws), "--seed", str(a.seed), "--out", a.out,
                   "--workers", str(a.workers)]))
