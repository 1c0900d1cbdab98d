"""Exponential (C, gamma) grid and cross-validated grid search."""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset, SubsetPartition, atomic_write_text
from .kmeans import KRule, centroid_dataset, cluster_per_label
from .svm import ConvergenceError, TrainConfig, predict, train_smo

GRID_FORMAT = "# kmcsvm-grid v1"


class DegenerateFoldsError(ValueError):
    """Every fold had a single-class training remainder."""


@dataclass(frozen=True)
class GridSpec:
    """C = c_base**M and gamma = r_base**-(2N + 1) over integer ranges."""

    c_base: float = 2.0
    r_base: float = 2.0
    M_range: tuple[int, ...] = tuple(range(-5, 11))
    N_range: tuple[int, ...] = tuple(range(-5, 11))

    def __post_init__(self):
        if not (self.c_base > 1 and self.r_base > 1):
            raise ValueError("grid bases must exceed 1")
        if not self.M_range or not self.N_range:
            raise ValueError("empty grid range")
        object.__setattr__(self, "M_range", tuple(int(m) for m in self.M_range))
        object.__setattr__(self, "N_range", tuple(int(n) for n in self.N_range))

    def C(self, M: int) -> float:
        return float(self.c_base) ** M

    def gamma(self, N: int) -> float:
        return float(self.r_base) ** -(2 * N + 1)


def make_grid(spec: GridSpec = GridSpec()) -> list[tuple[float, float]]:
    """All (C, gamma) cells, M-major then N."""
    return [(spec.C(M), spec.gamma(N)) for M in spec.M_range for N in spec.N_range]


@dataclass(frozen=True)
class GridResult:
    """``scores`` maps (M, N) to mean CV accuracy."""

    spec: GridSpec
    scores: dict
    best_M: int
    best_N: int
    best_score: float

    @property
    def best_C(self) -> float:
        return self.spec.C(self.best_M)

    @property
    def best_gamma(self) -> float:
        return self.spec.gamma(self.best_N)

    def to_tsv(self) -> str:
        lines = [GRID_FORMAT, "M\tN\tC\tgamma\tscore"]
        for (M, N), s in self.scores.items():
            lines.append(f"{M}\t{N}\t{self.spec.C(M)!r}\t{self.spec.gamma(N)!r}\t{s!r}")
        return "\n".join(lines) + "\n"

    def save_tsv(self, path) -> None:
        atomic_write_text(path, self.to_tsv())


def read_grid_tsv(path) -> list[tuple[int, int, float, float, float]]:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("# kmcsvm-grid v"):
        raise ValueError(f"{path}: not a kmcsvm grid file")
    if int(lines[0].rsplit("v", 1)[1]) > 1:
        raise ValueError(f"{path}: grid format {lines[0][2:]!r} is newer than supported")
    rows = []
    for ln in lines[2:]:
        M, N, C, g, s = ln.split("\t")
        rows.append((int(M), int(N), float(C), float(g), float(s)))
    return rows


def cv_score(data: Dataset, C: float, gamma: float, partition: SubsetPartition,
             cluster_rule: KRule | None = None, seed: int = 0, kkt_tol: float = 1e-3) -> float:
    """Mean held-out accuracy over leave-one-subset-out folds.

    Folds whose training remainder lacks a class are skipped with a
    warning. Every fold uses the same seed, so relabelling subsets cannot
    change the result.
    """
    if len(partition.assignments) != len(data):
        raise ValueError("partition does not cover the dataset")
    cfg = TrainConfig(C, gamma, kkt_tol)
    accs = []
    skipped = 0
    for train_idx, test_idx in partition.folds():
        ytr = data.y[train_idx]
        if not (np.any(ytr == 1) and np.any(ytr == -1)):
            skipped += 1
            continue
        train = data.subset(train_idx)
        if cluster_rule is not None:
            train = centroid_dataset(cluster_per_label(train, cluster_rule, seed), data.sample_rate)
        try:
            model = train_smo(train.X, train.y, cfg, seed)
        except ConvergenceError as err:
            warnings.warn(f"fold did not converge at C={C:g}, gamma={gamma:g}: {err}")
            model = err.model
        accs.append(float(np.mean(predict(model, data.X[test_idx]) == data.y[test_idx])))
    if skipped:
        warnings.warn(f"skipped {skipped} of {partition.z} folds with a single-class training set")
    if not accs:
        raise DegenerateFoldsError("every fold has a single-class training set")
    return math.fsum(accs) / len(accs)


def _cell_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _score_cell(args):
    data, C, gamma, partition, rule, seed = args
    return cv_score(data, C, gamma, partition, rule, seed)


def grid_search(data: Dataset, spec: GridSpec, z: int, cluster_rule: KRule | None = None, seed: int = 0,
                contiguous: bool = False, partition: SubsetPartition | None = None,
                workers: int | None = 1) -> GridResult:
    """Cross-validated score for every grid cell; argmax ties go to the
    smallest C, then the largest gamma.

    ``workers=None`` reads KMCSVM_THREADS (0 or unset means all cores).
    Each cell's seed derives from ``seed`` and the cell index, so the
    result does not depend on the worker count.
    """
    from .dataset import partition as make_partition

    if partition is None:
        partition = make_partition(data, z, seed, contiguous)
    cells = [(M, N) for M in spec.M_range for N in spec.N_range]
    jobs = [(data, spec.C(M), spec.gamma(N), partition, cluster_rule, _cell_seed(seed, k))
            for k, (M, N) in enumerate(cells)]
    n_workers = env_workers() if workers is None else max(1, workers)
    if n_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_score_cell, jobs))
    else:
        results = [_score_cell(job) for job in jobs]
    scores = dict(zip(cells, results))
    best_score = max(results)
    # Strongest regularisation among the tied maxima.
    best_M, best_N = min((c for c in cells if scores[c] == best_score),
                         key=lambda c: (spec.C(c[0]), -spec.gamma(c[1])))
    return GridResult(spec, scores, best_M, best_N, best_score)


def env_workers() -> int:
    raw = os.environ.get("KMCSVM_THREADS", "").strip()
    n = int(raw) if raw else 0
    return (os.cpu_count() or 1) if n <= 0 else n
