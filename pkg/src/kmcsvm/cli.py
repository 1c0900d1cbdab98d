"""Command-line front end: ``kmcsvm <command> [flags]``.

Exit status is 0 on success, 1 on a usage error and 2 on a data, format or
convergence error. Output files are written atomically and only after all
arguments have been validated.
"""

from __future__ import annotations

import argparse
import json
import math
import secrets
import sys

from . import datagen
from .dataset import DatasetError, atomic_write_text, load_csv, save_csv
from .kmeans import KRule, centroid_dataset
from .model_selection import DegenerateFoldsError, GridSpec, grid_search, read_grid_tsv
from .pipeline import (
    BenchReport,
    WindowConfig,
    bench_compare,
    evaluate_offline,
    online_evaluate,
    read_reports,
    train_kmc_svm,
    window_bounds,
    write_reports,
)
from .svm import ConvergenceError, ModelFormatError, TrainConfig, load_model, predict, save_model, sv_count, train_smo

DEFAULT_C = 128.0
DEFAULT_GAMMA = 2.0**-9


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _positive(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be a positive number: {text!r}")
    return v


def _count(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1: {text!r}")
    return v


def _k_rule(text: str) -> KRule | None:
    if text.strip().lower() == "none":
        return None
    try:
        return KRule.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _int_range(text: str) -> tuple[int, ...]:
    """``lo:hi`` or ``lo:hi:step``, inclusive of ``hi``."""
    try:
        parts = [int(p) for p in text.split(":")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad range {text!r}") from None
    if len(parts) == 2:
        parts.append(1)
    if len(parts) != 3 or parts[2] < 1 or parts[1] < parts[0]:
        raise argparse.ArgumentTypeError(f"bad range {text!r}, expected lo:hi[:step] with lo <= hi")
    return tuple(range(parts[0], parts[1] + 1, parts[2]))


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="kmcsvm", description="Driving-style classification with k-means reduced SVMs.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="synthetic telemetry CSV")
    g.add_argument("--style", choices=sorted(datagen.STYLES), help="single-driver trace of this style")
    g.add_argument("--group", type=int, choices=(1, 2), default=1)
    g.add_argument("--duration", type=_positive, required=True, help="seconds (per run in cohort mode)")
    g.add_argument("--rate", type=_positive, default=50.0, help="samples per second")
    g.add_argument("--drivers", type=_count, help="cohort mode: drivers per style")
    g.add_argument("--runs", type=_count, default=1, help="cohort mode: runs per driver")
    g.add_argument("--profile-config", help="profile file overriding the shipped one")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", required=True)

    t = sub.add_parser("train", help="fit a model (kMC-SVM, or plain SVM with --k-rule none)")
    t.add_argument("--data", required=True)
    t.add_argument("--k-rule", type=_k_rule, default=KRule("sqrt_n_over_3"),
                   help="sqrt-n-over-3, sqrt-n-over-2, an integer K, or none")
    _train_flags(t)
    t.add_argument("--model-out", required=True)
    t.add_argument("--clusters-out", help="write the labelled centroids as CSV")

    s = sub.add_parser("grid-search", help="cross-validated (C, gamma) grid")
    s.add_argument("--data", required=True)
    s.add_argument("--z", type=int, default=10, help="number of subsets (one held out per fold)")
    s.add_argument("--k-rule", type=_k_rule, default=None, help="cluster each training fold first")
    s.add_argument("--m-range", type=_int_range, default=tuple(range(-5, 11)), help="C = c_base**M")
    s.add_argument("--n-range", type=_int_range, default=tuple(range(-5, 11)), help="gamma = r_base**-(2N+1)")
    s.add_argument("--c-base", type=_positive, default=2.0)
    s.add_argument("--r-base", type=_positive, default=2.0)
    s.add_argument("--contiguous", action="store_true", help="subsets are consecutive blocks, not shuffled")
    s.add_argument("--workers", type=int, help="parallel cells (default KMCSVM_THREADS, 0 = all cores)")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", help="score table (TSV)")

    e = sub.add_parser("evaluate", help="offline per-class accuracy")
    e.add_argument("--model", required=True)
    e.add_argument("--test", required=True)
    mode = e.add_mutually_exclusive_group()
    mode.add_argument("--k-rule", type=_k_rule, default=KRule("sqrt_n_over_3"), help="cluster the test set")
    mode.add_argument("--raw", action="store_true", help="score raw samples instead of test centroids")
    e.add_argument("--seed", type=int)
    e.add_argument("--out", help="report (JSON lines)")

    o = sub.add_parser("online", help="windowed classification of a stream")
    o.add_argument("--model", required=True)
    o.add_argument("--stream", required=True)
    o.add_argument("--tau", type=_positive, default=1.4, help="window span in seconds")
    o.add_argument("--rate", type=_positive, default=50.0, help="stream sample rate")
    o.add_argument("--out", help="report (JSON lines)")

    b = sub.add_parser("bench", help="time kMC-SVM against plain SVM")
    b.add_argument("--train", required=True)
    b.add_argument("--test", required=True)
    b.add_argument("--k-rule", type=_k_rule, default=KRule("sqrt_n_over_2"))
    _train_flags(b)
    b.add_argument("--out", help="reports (JSON lines)")

    x = sub.add_parser("export-plot", help="TSV or text behind scatter plots, heat maps and tables")
    x.add_argument("--input", required=True, help="dataset CSV, grid TSV or report JSON lines")
    x.add_argument("--kind", choices=("scatter", "heatmap", "table"), required=True)
    x.add_argument("--model", help="scatter: fill the predicted column")
    x.add_argument("--out", required=True)
    return p


def _train_flags(p):
    p.add_argument("--C", type=_positive, default=DEFAULT_C, help="box constraint (default 2^7)")
    p.add_argument("--gamma", type=_positive, default=DEFAULT_GAMMA, help="RBF width (default 2^-9)")
    p.add_argument("--kkt-tol", type=_positive, default=1e-3)
    p.add_argument("--max-iter", type=_count, default=10_000_000, help="cap on SMO pair updates")
    p.add_argument("--seed", type=int)


def _seed(args) -> int:
    if args.seed is None:
        args.seed = secrets.randbits(32)
        print(f"seed: {args.seed}", file=sys.stderr)
    return args.seed


def format_table(records) -> str:
    """Aligned text, one row per report."""
    header = ("method", "T[s]", "n_sv", "lambda_agg", "lambda_mod", "agg", "mod")

    def pct(v):
        return "-" if v is None else f"{100 * v:.2f}%"

    rows = []
    for r in records:
        rep = r.report if isinstance(r, BenchReport) else r
        rows.append((
            r.method if isinstance(r, BenchReport) else rep.mode,
            f"{r.train_seconds:.3f}" if isinstance(r, BenchReport) else "-",
            str(r.sv_count) if isinstance(r, BenchReport) else "-",
            pct(rep.lambda_agg),
            pct(rep.lambda_mod),
            f"{rep.k_cor_agg}/{rep.k_all_agg}",
            f"{rep.k_cor_mod}/{rep.k_all_mod}",
        ))
    widths = [max(len(row[i]) for row in [header, *rows]) for i in range(len(header))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in [header, *rows]) + "\n"


def cmd_generate(args) -> None:
    if args.drivers is None and args.style is None:
        raise UsageError("generate: give --style for one trace or --drivers for a cohort")
    if args.drivers is not None and args.style is not None:
        raise UsageError("generate: a cohort has both styles; drop --style")
    seed = _seed(args)
    profiles = datagen.load_profiles(args.profile_config)
    key = lambda style: f"{style}-{args.group}"
    for style in datagen.STYLES:
        if key(style) not in profiles:
            raise DatasetError(f"profile [{key(style)}] missing from configuration")
    if args.drivers is not None:
        cohort_profiles = {lab: profiles[key(style)] for style, lab in datagen.STYLES.items()}
        base = datagen.GenConfig(args.duration, cohort_profiles[1], 1, seed, args.rate)
        ds, _ = datagen.generate_cohort(args.drivers, args.runs, base, args.group, cohort_profiles)
    else:
        cfg = datagen.GenConfig(args.duration, profiles[key(args.style)], datagen.STYLES[args.style], seed, args.rate)
        ds = datagen.generate(cfg)
    save_csv(ds, args.out)
    print(f"wrote {len(ds)} samples to {args.out}")


def cmd_train(args) -> None:
    seed = _seed(args)
    data = load_csv(args.data)
    cfg = TrainConfig(args.C, args.gamma, args.kkt_tol, max_iter=args.max_iter)
    if args.k_rule is None:
        if args.clusters_out:
            raise UsageError("train: --clusters-out needs a --k-rule other than none")
        model = train_smo(data.X, data.y, cfg, seed)
        n_fit = len(data)
    else:
        result = train_kmc_svm(data, args.k_rule, cfg, seed)
        model = result.model
        n_fit = sum(len(c.centroids) for c in result.clusters)
        if args.clusters_out:
            save_csv(centroid_dataset(result.clusters, data.sample_rate), args.clusters_out)
    save_model(model, args.model_out)
    print(f"trained on {n_fit} points, {sv_count(model)} support vectors -> {args.model_out}")


def cmd_grid_search(args) -> None:
    seed = _seed(args)
    data = load_csv(args.data)
    if not 1 < args.z <= len(data):
        raise UsageError(f"grid-search: --z must be in (1, {len(data)}]")
    spec = GridSpec(args.c_base, args.r_base, args.m_range, args.n_range)
    res = grid_search(data, spec, args.z, args.k_rule, seed, args.contiguous, workers=args.workers)
    if args.out:
        res.save_tsv(args.out)
    print(f"best M={res.best_M} N={res.best_N} C={res.best_C:g} gamma={res.best_gamma:g} "
          f"score={res.best_score:.4f} over {len(res.scores)} cells")


def cmd_evaluate(args) -> None:
    seed = _seed(args)
    model = load_model(args.model)
    test = load_csv(args.test)
    rep = evaluate_offline(model, test, None if args.raw else args.k_rule, seed)
    if args.out:
        write_reports(args.out, [rep])
    sys.stdout.write(format_table([rep]))


def cmd_online(args) -> None:
    model = load_model(args.model)
    stream = load_csv(args.stream, sample_rate=args.rate)
    wc = WindowConfig(args.tau, args.rate)
    rep = online_evaluate(model, stream, wc)
    if args.out:
        write_reports(args.out, [rep])
    print(f"{len(window_bounds(len(stream), wc))} windows of {wc.length} samples")
    sys.stdout.write(format_table([rep]))


def cmd_bench(args) -> None:
    seed = _seed(args)
    if args.k_rule is None:
        raise UsageError("bench: --k-rule none leaves nothing to compare")
    train = load_csv(args.train)
    test = load_csv(args.test)
    kmc, svm = bench_compare(train, test, args.k_rule, TrainConfig(args.C, args.gamma, args.kkt_tol, max_iter=args.max_iter), seed)
    if args.out:
        write_reports(args.out, [kmc, svm])
    sys.stdout.write(format_table([kmc, svm]))
    if not svm.converged:
        print("warning: plain SVM did not converge; its row uses the best-so-far model", file=sys.stderr)


def cmd_export_plot(args) -> None:
    if args.model and args.kind != "scatter":
        raise UsageError("export-plot: --model only applies to --kind scatter")
    if args.kind == "scatter":
        ds = load_csv(args.input)
        pred = predict(load_model(args.model), ds.X) if args.model else None
        lines = ["speed_kmh\tthrottle\tlabel\tpredicted"]
        for i, ((s, th), lab) in enumerate(zip(ds.X.tolist(), ds.y.tolist())):
            lines.append(f"{s!r}\t{th!r}\t{lab}\t{'NA' if pred is None else int(pred[i])}")
        text = "\n".join(lines) + "\n"
    elif args.kind == "heatmap":
        rows = read_grid_tsv(args.input)
        text = "M\tN\tscore\n" + "".join(f"{M}\t{N}\t{s!r}\n" for M, N, _, _, s in rows)
    else:
        text = format_table(read_reports(args.input))
    atomic_write_text(args.out, text)


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "grid-search": cmd_grid_search,
    "evaluate": cmd_evaluate,
    "online": cmd_online,
    "bench": cmd_bench,
    "export-plot": cmd_export_plot,
}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DatasetError, ModelFormatError, DegenerateFoldsError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
