"""Desk benchmark: kMC-SVM against plain SVM on a simulated driver cohort.

Each style gets --drivers drivers with --runs recorded runs of --duration
seconds at 50 Hz. The test cohort uses three runs per driver from an
independent seed. Prints the comparison table and optionally writes the
records as JSON lines.
"""

import argparse

from kmcsvm.cli import format_table
from kmcsvm.datagen import GenConfig, default_profile, generate_cohort
from kmcsvm.kmeans import KRule
from kmcsvm.pipeline import bench_compare, write_reports
from kmcsvm.svm import TrainConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--group", type=int, default=1, choices=(1, 2))
    ap.add_argument("--drivers", type=int, default=4)
    ap.add_argument("--runs", type=int, default=10)
    ap.add_argument("--duration", type=float, default=5.0)
    ap.add_argument("--k-rule", default="sqrt-n-over-2")
    ap.add_argument("--C", type=float, default=128.0)
    ap.add_argument("--gamma", type=float, default=2.0**-9)
    ap.add_argument("--seeds", type=int, nargs="+", default=[2026])
    ap.add_argument("--out")
    args = ap.parse_args()

    rule = KRule.parse(args.k_rule)
    mod = default_profile("moderate", args.group)
    records = []
    for seed in args.seeds:
        train, _ = generate_cohort(args.drivers, args.runs, GenConfig(args.duration, mod, -1, seed), args.group)
        test, _ = generate_cohort(args.drivers, 3, GenConfig(args.duration, mod, -1, seed + 1000), args.group)
        kmc, svm = bench_compare(train, test, rule, TrainConfig(args.C, args.gamma), seed)
        print(f"seed {seed}: {len(train)} training samples, speedup {svm.train_seconds / kmc.train_seconds:.1f}x")
        print(format_table([kmc, svm]))
        records += [kmc, svm]
    if args.out:
        write_reports(args.out, records)


if __name__ == "__main__":
    main()
