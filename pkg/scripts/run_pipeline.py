"""End-to-end experiment: synthetic corpus -> meta-learner -> comparison with baselines.

    python scripts/run_pipeline.py --n 400 --seed 9 --out runs/n400

Prints the test-split comparison against uniform-random and single-best
selection, plus per-stage timings.
"""

import argparse
import json
import logging

from admeta.pipeline import run_pipeline


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n", type=int, default=400)
    ap.add_argument("--seed", type=int, default=9)
    ap.add_argument("--metric", choices=("AUC", "AP"), default="AUC")
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--out", default="runs/pipeline")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    rep = run_pipeline(args.out, args.n, args.seed, args.metric, workers=args.workers)
    for name in ("meta_vs_random", "meta_vs_single_best"):
        for view in ("performance", "error"):
            r = rep[name][view]
            print(f"{name:20s} {view:11s} meta={r['mean_a']:.4f} other={r['mean_b']:.4f} "
                  f"t={r['t_statistic']} p={r['p_value']:.3g} d={r['effect_size_d']:.3f} ({r['effect_label']})")
    print(f"single best detector: {rep['single_best_detector']}  test datasets: {rep['n_test']}")
    print(json.dumps({k: round(v, 2) for k, v in rep["timings"].items()}))


if __name__ == "__main__":
    main()
