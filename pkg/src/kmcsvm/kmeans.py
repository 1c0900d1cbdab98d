"""Per-label k-means reduction of telemetry to labelled centroids."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import AGGRESSIVE, MODERATE, Dataset, DatasetError


@dataclass(frozen=True)
class KRule:
    """How many clusters to use for a class of ``n`` samples.

    ``kind`` is ``"sqrt_n_over_3"``, ``"sqrt_n_over_2"`` or ``"explicit"``.
    """

    kind: str
    k: int | None = None

    def __post_init__(self):
        if self.kind not in ("sqrt_n_over_3", "sqrt_n_over_2", "explicit"):
            raise ValueError(f"unknown K rule {self.kind!r}")
        if self.kind == "explicit" and (self.k is None or self.k < 1):
            raise ValueError("explicit K rule needs k >= 1")

    @classmethod
    def parse(cls, text: str) -> KRule:
        """Accepts ``sqrt-n-over-3``, ``sqrt-n-over-2`` or an integer."""
        t = text.strip().lower().replace("_", "-")
        if t == "sqrt-n-over-3":
            return cls("sqrt_n_over_3")
        if t == "sqrt-n-over-2":
            return cls("sqrt_n_over_2")
        if re.fullmatch(r"(explicit:)?\d+", t):
            return cls("explicit", int(t.split(":")[-1]))
        raise ValueError(f"unknown K rule {text!r}")

    def __str__(self) -> str:
        return str(self.k) if self.kind == "explicit" else self.kind.replace("_", "-")


SQRT_N_OVER_3 = KRule("sqrt_n_over_3")
SQRT_N_OVER_2 = KRule("sqrt_n_over_2")


def choose_k(n: int, rule: KRule) -> int:
    """K for ``n`` samples, rounded half-up and clamped to [1, n // 2]."""
    if n < 2:
        raise ValueError(f"need at least 2 samples to choose K, got {n}")
    if rule.kind == "sqrt_n_over_3":
        k = math.floor(math.sqrt(n / 3) + 0.5)
    elif rule.kind == "sqrt_n_over_2":
        k = math.floor(math.sqrt(n / 2) + 0.5)
    else:
        k = rule.k
    return max(1, min(k, n // 2))


@dataclass(frozen=True, eq=False)
class ClusterSet:
    centroids: np.ndarray
    member_counts: np.ndarray
    inertia: float
    label: int | None = None
    assignments: np.ndarray = field(default=None, repr=False)
    history: tuple[float, ...] = field(default=(), repr=False)
    n_iter: int = 0

    def __post_init__(self):
        if len(self.centroids) != len(self.member_counts):
            raise ValueError("centroid and member-count lengths differ")
        if np.any(np.asarray(self.member_counts) < 1):
            raise ValueError("empty cluster in output")
        if not self.inertia >= 0:
            raise ValueError("negative inertia")

    def __eq__(self, other) -> bool:
        if not isinstance(other, ClusterSet):
            return NotImplemented
        return (
            self.label == other.label
            and self.inertia == other.inertia
            and np.array_equal(self.centroids, other.centroids)
            and np.array_equal(self.member_counts, other.member_counts)
        )

    def __len__(self) -> int:
        return len(self.centroids)


def _sq_dists(X, C):
    d0 = X[:, 0, None] - C[None, :, 0]
    d1 = X[:, 1, None] - C[None, :, 1]
    return d0 * d0 + d1 * d1


def _kmeans_pp(X, K, rng):
    n = len(X)
    chosen = [int(rng.integers(n))]
    closest = _sq_dists(X, X[chosen])[:, 0]
    for _ in range(1, K):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            idx = int(rng.integers(n))
        chosen.append(idx)
        closest = np.minimum(closest, _sq_dists(X, X[idx:idx + 1])[:, 0])
    return X[chosen].copy()


def _means(X, labels, K):
    counts = np.bincount(labels, minlength=K)
    sums = np.column_stack([
        np.bincount(labels, weights=X[:, 0], minlength=K),
        np.bincount(labels, weights=X[:, 1], minlength=K),
    ])
    return sums / counts[:, None], counts


def _repair_empty(X, labels, point_cost, K):
    """Move the farthest point of a multi-member cluster into each empty one."""
    counts = np.bincount(labels, minlength=K)
    for k in np.flatnonzero(counts == 0):
        donors = counts[labels] >= 2
        cost = np.where(donors, point_cost, -1.0)
        far = int(np.argmax(cost))
        counts[labels[far]] -= 1
        labels[far] = k
        counts[k] = 1
        point_cost[far] = 0.0
    return labels


def lloyd(points, K: int, seed: int = 0, max_iter: int = 300, tol: float = 1e-6,
          init: str = "k-means++") -> ClusterSet:
    """Lloyd iterations from k-means++ (or uniform random-point) seeding.

    Stops when assignments stop changing or no centroid moves by ``tol``.
    The returned centroids are the exact means of the returned assignments.
    """
    X = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = len(X)
    if K < 1:
        raise ValueError("K must be >= 1")
    if K > n:
        raise ValueError(f"K={K} exceeds {n} points")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if K == n:
        labels = np.arange(n)
        return ClusterSet(X.copy(), np.ones(n, dtype=np.int64), 0.0, None, labels, (0.0,), 0)

    rng = np.random.default_rng(seed)
    if init == "k-means++":
        centroids = _kmeans_pp(X, K, rng)
    elif init == "random":
        centroids = X[rng.choice(n, size=K, replace=False)].copy()
    else:
        raise ValueError(f"unknown init {init!r}")

    labels = None
    history = []
    it = 0
    for it in range(1, max_iter + 1):
        d = _sq_dists(X, centroids)
        new_labels = np.argmin(d, axis=1)
        new_labels = _repair_empty(X, new_labels, d[np.arange(n), new_labels], K)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        new_centroids, _ = _means(X, labels, K)
        shift = np.sqrt(_sq_dists(new_centroids, centroids)[np.arange(K), np.arange(K)].max())
        centroids = new_centroids
        history.append(_inertia(X, labels, centroids))
        if shift < tol:
            break
    counts = np.bincount(labels, minlength=K)
    return ClusterSet(centroids, counts, history[-1], None, labels, tuple(history), it)


def _inertia(X, labels, centroids) -> float:
    diff = X - centroids[labels]
    return float(np.sum(diff * diff))


def cluster_per_label(ds: Dataset, rule: KRule, seed: int = 0, **lloyd_kw) -> tuple[ClusterSet, ClusterSet]:
    """Cluster the aggressive and moderate samples separately.

    Returns ``(aggressive, moderate)``; each class gets K from its own size.
    """
    out = []
    for label in (AGGRESSIVE, MODERATE):
        pts = ds.X[ds.y == label]
        if len(pts) == 0:
            raise DatasetError(f"class {label:+d} absent")
        k = choose_k(len(pts), rule) if len(pts) >= 2 else 1
        cs = lloyd(pts, k, seed=_label_seed(seed, label), **lloyd_kw)
        out.append(replace(cs, label=label))
    return out[0], out[1]


def _label_seed(seed: int, label: int) -> int:
    return int(np.random.SeedSequence([seed, 0 if label == AGGRESSIVE else 1]).generate_state(1)[0])


def centroid_dataset(sets, sample_rate: float | None = None) -> Dataset:
    """Labelled centroids of one or more ClusterSets as a Dataset."""
    X = np.concatenate([cs.centroids for cs in sets])
    y = np.concatenate([np.full(len(cs), cs.label) for cs in sets])
    return Dataset(X, y, 50.0 if sample_rate is None else sample_rate)
