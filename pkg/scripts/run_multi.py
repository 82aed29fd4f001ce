"""Multi-instrument design at several first-stage strengths.

Compares 2SLS, fixed-weight, Rao-Blackwellized (Z'Z and two-step GMM weights),
sign-robust and oracle estimators on the stylized quarter-of-birth design.

Usage: python scripts/run_multi.py [--draws N] [--zeta-draws S] [--expected-f 1.5,3,10] [--out DIR]
"""

import argparse
import sys

from unbiased_iv.cli import main


def parse(argv):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--draws", type=int, default=10_000)
    p.add_argument("--zeta-draws", type=int, default=1000)
    p.add_argument("--expected-f", default="1.5,3,10")
    p.add_argument("--c", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="results/multi")
    p.add_argument("--workers", type=int, default=1)
    return p.parse_args(argv)


if __name__ == "__main__":
    a = parse(sys.argv[1:])
    sys.exit(main([
        "simulate", "--design", "multi", "--draws", str(a.draws), "--zeta-draws", str(a.zeta_draws),
        "--expected-f", a.expected_f, "--c", str(a.c), "--seed", str(a.seed), "--out", a.out,
        "--workers", str(a.workers),
    ]))
