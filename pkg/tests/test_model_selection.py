import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

import kmcsvm.model_selection as ms
from kmcsvm.dataset import Dataset, SubsetPartition, partition
from kmcsvm.kmeans import SQRT_N_OVER_3
from kmcsvm.model_selection import (
    DegenerateFoldsError,
    GridSpec,
    cv_score,
    env_workers,
    grid_search,
    make_grid,
    read_grid_tsv,
)

from synth import blob_dataset


def test_default_grid_size():
    assert len(make_grid()) == 256


def test_optimum_cell():
    spec = GridSpec()
    assert spec.C(7) == 128.0
    assert spec.gamma(4) == 0.001953125 == 2.0**-9


def test_negative_n_gives_large_gamma():
    assert GridSpec().gamma(-5) == 512.0


def test_grid_order_is_m_major():
    spec = GridSpec(M_range=(0, 1), N_range=(0, 1))
    assert make_grid(spec) == [(1.0, 0.5), (1.0, 0.125), (2.0, 0.5), (2.0, 0.125)]


@given(st.floats(1.01, 10), st.floats(1.01, 10),
       st.lists(st.integers(-5, 10), min_size=1, max_size=6, unique=True),
       st.lists(st.integers(-5, 10), min_size=1, max_size=6, unique=True))
def test_grid_positive_and_complete(cb, rb, Ms, Ns):
    cells = make_grid(GridSpec(cb, rb, tuple(Ms), tuple(Ns)))
    assert len(cells) == len(Ms) * len(Ns)
    assert all(c > 0 and g > 0 for c, g in cells)


@pytest.mark.parametrize("kw", [{"c_base": 1.0}, {"r_base": 0.5}, {"M_range": ()}])
def test_grid_spec_validation(kw):
    with pytest.raises(ValueError):
        GridSpec(**kw)


def separated(n=60, seed=0):
    return blob_dataset(n, seed, spread=2.0, centers=((90.0, 0.8), (30.0, 0.2)))


def test_separated_blobs_score_one():
    ds = separated()
    assert cv_score(ds, 1.0, 2**-9, partition(ds, 5, seed=1)) == 1.0
    assert cv_score(ds, 1.0, 2**-9, partition(ds, 5, seed=1), SQRT_N_OVER_3) == 1.0


def test_one_training_cycle_per_fold(monkeypatch):
    calls = []
    real = ms.train_smo

    def counting(*a, **kw):
        calls.append(1)
        return real(*a, **kw)

    monkeypatch.setattr(ms, "train_smo", counting)
    ds = separated()
    cv_score(ds, 1.0, 0.5, partition(ds, 7, seed=2))
    assert len(calls) == 7


def test_shuffled_labels_score_near_half():
    # tiny folds bias this below 0.5 (held-out class ratios mirror the
    # training ratios), so use enough samples for the baseline to settle
    scores = []
    for seed in range(5):
        ds = separated(150, seed)
        y = np.random.default_rng(seed).permutation(ds.y)
        shuffled = Dataset(ds.X, y)
        scores.append(cv_score(shuffled, 1.0, 2**-3, partition(shuffled, 5, seed)))
    assert abs(np.mean(scores) - 0.5) <= 0.1


def test_fold_relabelling_does_not_change_score():
    ds = blob_dataset(40, seed=4)
    p = partition(ds, 6, seed=3)
    perm = np.random.default_rng(0).permutation(6)
    relabelled = SubsetPartition(6, perm[p.assignments])
    assert cv_score(ds, 4.0, 2**-5, p, SQRT_N_OVER_3, seed=9) == cv_score(ds, 4.0, 2**-5, relabelled, SQRT_N_OVER_3, seed=9)


def test_degenerate_folds_skipped_with_warning():
    # holding out the only -1 subset leaves a single-class remainder
    X = np.column_stack([np.linspace(10, 100, 9), np.full(9, 0.5)])
    y = np.array([1, 1, 1, 1, 1, 1, -1, -1, -1])
    ds = Dataset(X, y)
    p = SubsetPartition(3, [0, 0, 0, 1, 1, 1, 2, 2, 2])
    with pytest.warns(UserWarning, match="skipped"):
        cv_score(ds, 1.0, 0.01, p)


def test_all_folds_degenerate():
    ds = Dataset([[10.0, 0.1], [20.0, 0.2], [80.0, 0.8], [90.0, 0.9]], [-1, -1, 1, 1])
    with pytest.raises(DegenerateFoldsError), warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cv_score(ds, 1.0, 0.01, SubsetPartition(2, [0, 0, 1, 1]))


def test_partition_must_cover_data():
    ds = separated()
    with pytest.raises(ValueError):
        cv_score(ds, 1.0, 0.5, partition(10, 2))


def test_singleton_grid():
    ds = separated(30)
    res = grid_search(ds, GridSpec(M_range=(3,), N_range=(2,)), z=3, seed=1)
    assert (res.best_M, res.best_N) == (3, 2)
    assert res.best_C == 8.0 and res.best_gamma == 2.0**-5


def test_ties_prefer_small_c_then_large_gamma():
    ds = separated(30)
    res = grid_search(ds, GridSpec(M_range=(2, 0, 1), N_range=(4, 3)), z=3, seed=1)
    assert set(res.scores.values()) == {1.0}
    assert (res.best_M, res.best_N) == (0, 3)


def test_default_grid_dominates_initial_cell():
    ds = blob_dataset(25, seed=5)
    res = grid_search(ds, GridSpec(), z=5, seed=2)
    assert len(res.scores) == 256
    assert res.best_score == max(res.scores.values())
    assert res.best_score >= res.scores[(0, 0)]
    assert all(0 <= s <= 1 for s in res.scores.values())


def test_worker_count_does_not_change_result():
    ds = blob_dataset(20, seed=6)
    spec = GridSpec(M_range=(0, 3), N_range=(2, 4))
    one = grid_search(ds, spec, z=4, cluster_rule=SQRT_N_OVER_3, seed=7, workers=1)
    two = grid_search(ds, spec, z=4, cluster_rule=SQRT_N_OVER_3, seed=7, workers=2)
    assert one.scores == two.scores


def test_tsv_round_trip(tmp_path):
    ds = separated(20)
    res = grid_search(ds, GridSpec(M_range=(0, 1), N_range=(3,)), z=2, seed=0)
    res.save_tsv(tmp_path / "g.tsv")
    rows = read_grid_tsv(tmp_path / "g.tsv")
    assert [(M, N, s) for M, N, _, _, s in rows] == [(M, N, s) for (M, N), s in res.scores.items()]


def test_future_grid_version_refused(tmp_path):
    p = tmp_path / "g.tsv"
    p.write_text("# kmcsvm-grid v2\nM\tN\tC\tgamma\tscore\n")
    with pytest.raises(ValueError, match="newer"):
        read_grid_tsv(p)


def test_env_workers(monkeypatch):
    monkeypatch.setenv("KMCSVM_THREADS", "3")
    assert env_workers() == 3
    monkeypatch.setenv("KMCSVM_THREADS", "0")
    assert env_workers() >= 1
