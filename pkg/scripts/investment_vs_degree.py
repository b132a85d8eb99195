"""Investment versus degree on a preferential-attachment graph.

Runs the allocation for ``configs/pa200.ini`` over several graph seeds and
prints the Spearman correlation between per-node investment and degree,
plus the mean investment per degree bucket. The per-node data for each seed
lands in ``<out>/seed<k>/scatter.csv``.

    python3 scripts/investment_vs_degree.py --out runs/pa200 --seeds 5
"""

import argparse
import csv
import json
from collections import defaultdict
from pathlib import Path

import numpy as np

from sais_awareness.cli import main as cli

ROOT = Path(__file__).resolve().parents[1]


def run(out: Path, seeds: int) -> None:
    by_degree = defaultdict(list)
    for seed in range(seeds):
        target = out / f"seed{seed}"
        code = cli(["allocate", "--config", str(ROOT / "configs" / "pa200.ini"),
                    "--seed", str(seed), "--out", str(target)])
        if code != 0:
            raise SystemExit(f"allocation failed for seed {seed} (exit {code})")
        manifest = json.loads((target / "manifest.json").read_text())
        print(f"seed {seed}: spearman {manifest['spearman_investment_degree']:.3f}")
        with open(target / "scatter.csv") as fh:
            for row in csv.DictReader(fh):
                by_degree[int(row["degree"])].append(float(row["investment"]))
    print("\ndegree  nodes  mean investment")
    for d in sorted(by_degree):
        vals = by_degree[d]
        print(f"{d:6d} {len(vals):6d} {np.mean(vals):16.4f}")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--out", default="runs/pa200")
    parser.add_argument("--seeds", type=int, default=5)
    args = parser.parse_args()
    run(Path(args.out), args.seeds)
