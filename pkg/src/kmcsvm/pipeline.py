"""kMC-SVM training, per-class evaluation and time-cost comparison."""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .dataset import AGGRESSIVE, MODERATE, Dataset, DatasetError, atomic_write_text
from .kmeans import ClusterSet, KRule, centroid_dataset, cluster_per_label
from .svm import ConvergenceError, SvmModel, TrainConfig, predict, sv_count, train_smo, warm_up

REPORT_FORMAT = "kmcsvm-report v1"


@dataclass(frozen=True)
class EvalReport:
    """Per-class recognition counts.

    ``lambda_agg`` / ``lambda_mod`` are correct/total for the class, or
    None when the class does not occur in the evaluated data.
    """

    k_cor_agg: int
    k_all_agg: int
    k_cor_mod: int
    k_all_mod: int
    mode: str = "offline"

    def __post_init__(self):
        if self.mode not in ("offline", "online", "raw"):
            raise ValueError(f"unknown mode {self.mode!r}")
        for cor, tot in ((self.k_cor_agg, self.k_all_agg), (self.k_cor_mod, self.k_all_mod)):
            if not 0 <= cor <= tot:
                raise ValueError(f"inconsistent counts {cor}/{tot}")

    @property
    def lambda_agg(self) -> float | None:
        return self.k_cor_agg / self.k_all_agg if self.k_all_agg else None

    @property
    def lambda_mod(self) -> float | None:
        return self.k_cor_mod / self.k_all_mod if self.k_all_mod else None

    @property
    def counts(self) -> tuple[int, int, int, int]:
        return (self.k_cor_agg, self.k_all_agg, self.k_cor_mod, self.k_all_mod)

    @property
    def n_evaluated(self) -> int:
        return self.k_all_agg + self.k_all_mod

    @classmethod
    def from_predictions(cls, truth, predicted, mode: str = "offline") -> EvalReport:
        truth = np.asarray(truth)
        predicted = np.asarray(predicted)
        agg = truth == AGGRESSIVE
        mod = truth == MODERATE
        return cls(
            int(np.count_nonzero(agg & (predicted == AGGRESSIVE))),
            int(np.count_nonzero(agg)),
            int(np.count_nonzero(mod & (predicted == MODERATE))),
            int(np.count_nonzero(mod)),
            mode,
        )

    def merged(self, other: EvalReport) -> EvalReport:
        if other.mode != self.mode:
            raise ValueError("cannot merge reports of different modes")
        return EvalReport(*(a + b for a, b in zip(self.counts, other.counts)), self.mode)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "lambda_agg": self.lambda_agg,
            "lambda_mod": self.lambda_mod,
            "k_cor_agg": self.k_cor_agg,
            "k_all_agg": self.k_all_agg,
            "k_cor_mod": self.k_cor_mod,
            "k_all_mod": self.k_all_mod,
        }

    @classmethod
    def from_dict(cls, d: dict) -> EvalReport:
        return cls(d["k_cor_agg"], d["k_all_agg"], d["k_cor_mod"], d["k_all_mod"], d["mode"])


@dataclass(frozen=True)
class WindowConfig:
    tau: float = 1.4
    sample_rate: float = 50.0

    def __post_init__(self):
        if not self.tau > 0 or not self.sample_rate > 0:
            raise ValueError("tau and sample_rate must be positive")
        if self.length < 1:
            raise ValueError("window shorter than one sample")

    @property
    def length(self) -> int:
        """Window length in samples, round(tau * rate)."""
        return int(math.floor(self.tau * self.sample_rate + 0.5))


def window_bounds(n: int, wc: WindowConfig) -> list[tuple[int, int]]:
    """Consecutive disjoint [start, stop) windows; a trailing partial window is dropped."""
    w = wc.length
    return [(s, s + w) for s in range(0, (n // w) * w, w)]


@dataclass(frozen=True)
class KmcResult:
    model: SvmModel
    clusters: tuple[ClusterSet, ClusterSet]
    cluster_seconds: float
    train_seconds: float

    @property
    def total_seconds(self) -> float:
        return self.cluster_seconds + self.train_seconds


@dataclass(frozen=True)
class BenchReport:
    method: str
    train_seconds: float
    sv_count: int
    report: EvalReport
    n_train: int = 0
    converged: bool = True
    checksum: str = field(default="", compare=False)

    def __post_init__(self):
        if self.method not in ("kmc_svm", "svm"):
            raise ValueError(f"unknown method {self.method!r}")
        if not self.train_seconds > 0:
            raise ValueError("train_seconds must be positive")

    def to_dict(self) -> dict:
        d = {
            "method": self.method,
            "train_seconds": self.train_seconds,
            "sv_count": self.sv_count,
            "n_train": self.n_train,
            "converged": self.converged,
            "checksum": self.checksum,
        }
        d.update({f"report_{k}": v for k, v in self.report.to_dict().items()})
        return d

    @classmethod
    def from_dict(cls, d: dict) -> BenchReport:
        rep = EvalReport.from_dict({k[len("report_"):]: v for k, v in d.items() if k.startswith("report_")})
        return cls(d["method"], d["train_seconds"], d["sv_count"], rep, d.get("n_train", 0),
                   d.get("converged", True), d.get("checksum", ""))


def train_kmc_svm(train: Dataset, rule: KRule, cfg: TrainConfig, seed: int = 0) -> KmcResult:
    """Cluster each class, then fit the SVM on the labelled centroids."""
    t0 = time.perf_counter()
    clusters = cluster_per_label(train, rule, seed)
    t1 = time.perf_counter()
    reduced = centroid_dataset(clusters, train.sample_rate)
    model = train_smo(reduced.X, reduced.y, cfg, seed)
    t2 = time.perf_counter()
    return KmcResult(model, clusters, t1 - t0, t2 - t1)


def evaluate_offline(model: SvmModel, test: Dataset, rule: KRule | None, seed: int = 0) -> EvalReport:
    """Score the test set's per-class centroids (or raw samples when ``rule`` is None)."""
    if rule is None:
        return EvalReport.from_predictions(test.y, predict(model, test.X), "raw")
    points = centroid_dataset(cluster_per_label(test, rule, seed), test.sample_rate)
    return EvalReport.from_predictions(points.y, predict(model, points.X), "offline")


def online_evaluate(model: SvmModel, stream: Dataset, wc: WindowConfig | None = None, seed: int = 0) -> EvalReport:
    """Classify each tau-second window by its mean feature point.

    A window's true label is its majority label (the stream label for a
    single-driver stream); ties go to the window's first sample.
    """
    if wc is None:
        wc = WindowConfig(sample_rate=stream.sample_rate)
    bounds = window_bounds(len(stream), wc)
    if not bounds:
        raise DatasetError(f"stream of {len(stream)} samples is shorter than one {wc.length}-sample window")
    w = wc.length
    m = len(bounds) * w
    means = stream.X[:m].reshape(len(bounds), w, 2).mean(axis=1)
    labels = stream.y[:m].reshape(len(bounds), w)
    votes = labels.sum(axis=1)
    truth = np.where(votes > 0, AGGRESSIVE, np.where(votes < 0, MODERATE, labels[:, 0]))
    return EvalReport.from_predictions(truth, predict(model, means), "online")


def bench_compare(train: Dataset, test: Dataset, rule: KRule, cfg: TrainConfig, seed: int = 0,
                  eval_rule: KRule | None = "same") -> tuple[BenchReport, BenchReport]:
    """Time kMC-SVM (clustering + training) against plain SVM on raw data.

    Both arms see the same arrays, run one after the other, and are scored
    with the same offline evaluation (``eval_rule`` defaults to ``rule``).
    A plain-SVM convergence failure is reported, not raised.
    """
    if eval_rule == "same":
        eval_rule = rule
    before = train.checksum() + test.checksum()
    warm_up()

    kmc = train_kmc_svm(train, rule, cfg, seed)
    kmc_report = BenchReport(
        "kmc_svm", kmc.total_seconds, sv_count(kmc.model),
        evaluate_offline(kmc.model, test, eval_rule, seed), len(train), True, before,
    )

    t0 = time.perf_counter()
    converged = True
    try:
        plain = train_smo(train.X, train.y, cfg, seed)
    except ConvergenceError as err:
        plain, converged = err.model, False
    plain_seconds = time.perf_counter() - t0
    svm_report = BenchReport(
        "svm", plain_seconds, sv_count(plain),
        evaluate_offline(plain, test, eval_rule, seed), len(train), converged, before,
    )

    after = train.checksum() + test.checksum()
    assert after == before, "benchmark inputs changed between arms"
    return kmc_report, svm_report


def write_reports(path, records) -> None:
    """JSON lines; each record is an EvalReport or BenchReport."""
    lines = []
    for rec in records:
        kind = "bench" if isinstance(rec, BenchReport) else "eval"
        lines.append(json.dumps({"format": REPORT_FORMAT, "kind": kind, **rec.to_dict()}, sort_keys=True))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_reports(path) -> list:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            d = json.loads(line)
            fmt = d.get("format", "")
            if not fmt.startswith("kmcsvm-report v"):
                raise ValueError(f"{path}: line {lineno}: not a kmcsvm report")
            if int(fmt.rsplit("v", 1)[1]) > 1:
                raise ValueError(f"{path}: line {lineno}: report format {fmt!r} is newer than supported")
            out.append(BenchReport.from_dict(d) if d["kind"] == "bench" else EvalReport.from_dict(d))
    return out
