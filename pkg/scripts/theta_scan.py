"""Spectral margin as the global infection scale theta varies.

Writes ``theta,margin`` rows around the critical scale for a generated graph
and prints theta_c. Awareness rates scale with beta so kappa / beta is fixed.

    python3 scripts/theta_scan.py --kind preferential_attachment --n 200 > scan.csv
"""

import argparse
import sys

import numpy as np

from sais_awareness.dynamics import SaisParams, epidemic_threshold_theta, spectral_margin
from sais_awareness.graph import generate


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--kind", default="erdos_renyi")
    parser.add_argument("--n", type=int, default=50)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--kappa-over-beta", type=float, default=1.0)
    parser.add_argument("--r", type=float, default=0.5)
    parser.add_argument("--points", type=int, default=41)
    args = parser.parse_args(argv)

    g = generate(args.kind, args.n, args.seed)
    params = SaisParams.create(g.n, 1.0, 1.0, args.kappa_over_beta, args.r)
    theta_c = epidemic_threshold_theta(g, params).theta_c
    print(f"theta_c = {theta_c:.10g}", file=sys.stderr)
    print("theta,margin")
    for theta in (np.linspace(0.5, 1.5, args.points) * theta_c).tolist():
        print(f"{theta!r},{spectral_margin(g, params.scaled(theta)).margin!r}")


if __name__ == "__main__":
    main()
