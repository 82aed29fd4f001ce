"""Risk lower bound curve against the MAD of unbiased estimators.

Sweeps E[F] on the stylized k = 3 design and writes bound.csv plus a manifest.

Usage: python scripts/run_bound.py [--expected-f 1.5,2,3,5,10,20] [--draws N] [--out DIR]
"""

import argparse
import sys

from unbiased_iv.cli import main


def parse(argv):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--expected-f", default="1.5,2,3,5,10,20")
    p.add_argument("--draws", type=int, default=20_000)
    p.add_argument("--zeta-draws", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="results/bound")
    p.add_argument("--workers", type=int, default=1)
    return p.parse_args(argv)


if __name__ == "__main__":
    a = parse(sys.argv[1:])
    sys.exit(main([
        "bound", "--expected-f", a.expected_f, "--draws", str(a.draws), "--zeta-draws", str(a.zeta_draws),
        "--seed", str(a.seed), "--out", a.out, "--workers", str(a.workers),
    ]))
