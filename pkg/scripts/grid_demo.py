"""Grid search over (C, gamma) on a small simulated cohort.

Leave-one-run-out cross validation with optional per-label clustering of
each training fold. Prints the best cell and writes the full score map as
TSV (plot it with ``kmcsvm export-plot --kind heatmap``).
"""

import argparse
import time

from kmcsvm.datagen import GenConfig, default_profile, generate_cohort
from kmcsvm.kmeans import KRule
from kmcsvm.model_selection import GridSpec, grid_search


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--group", type=int, default=1, choices=(1, 2))
    ap.add_argument("--duration", type=float, default=1.0)
    ap.add_argument("--k-rule", default="sqrt-n-over-3", help="'none' trains each fold on raw samples")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=None, help="default: KMCSVM_THREADS or all cores")
    ap.add_argument("--out", default="grid.tsv")
    args = ap.parse_args()

    mod = default_profile("moderate", args.group)
    data, part = generate_cohort(2, 4, GenConfig(args.duration, mod, -1, args.seed), args.group)
    rule = None if args.k_rule == "none" else KRule.parse(args.k_rule)
    t0 = time.perf_counter()
    res = grid_search(data, GridSpec(), part.z, rule, args.seed, partition=part, workers=args.workers)
    print(f"{len(res.scores)} cells, {part.z} folds, {time.perf_counter() - t0:.1f}s")
    print(f"best M={res.best_M} N={res.best_N} C={res.best_C:g} gamma={res.best_gamma:g} score={res.best_score:.3f}")
    res.save_tsv(args.out)


if __name__ == "__main__":
    main()
