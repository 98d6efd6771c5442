"""Summarize a pipeline run: winning detector per dataset, grouped by anomaly regime.

    python scripts/winners.py runs/pipeline
"""

import argparse
import json
from collections import Counter
from pathlib import Path

import numpy as np

from admeta.perfmatrix import PerformanceMatrix


def regime(mix) -> str:
    names = ("global", "local", "collective")
    return names[int(np.argmax(mix))] if max(mix) == 1.0 else "mixed"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("run", type=Path)
    ap.add_argument("--metric", choices=("AUC", "AP"), default="AUC")
    args = ap.parse_args()

    m = PerformanceMatrix.load(args.run / ("yauc.csv" if args.metric == "AUC" else "yap.csv"), args.metric)
    specs = {s["name"]: s for s in json.loads((args.run / "corpus" / "manifest.json").read_text())["specs"]}
    by_regime: dict[str, Counter] = {}
    for name, row in zip(m.dataset_names, m.values):
        win = m.detector_ids[int(np.nanargmax(row))]
        by_regime.setdefault(regime(specs[name]["anomaly_mix"]), Counter())[win] += 1
    total = sum(by_regime.values(), Counter())
    print(f"{'regime':11s} " + " ".join(f"{d:>7s}" for d in m.detector_ids))
    for r, c in sorted(by_regime.items()) + [("all", total)]:
        print(f"{r:11s} " + " ".join(f"{c[d]:7d}" for d in m.detector_ids))
    print("mean " + args.metric + ": " + ", ".join(
        f"{d} {v:.3f}" for d, v in zip(m.detector_ids, np.nanmean(m.values, axis=0))))


if __name__ == "__main__":
    main()
