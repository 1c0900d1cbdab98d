import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

import kmcsvm.pipeline as pl
from kmcsvm.dataset import Dataset, DatasetError
from kmcsvm.kmeans import SQRT_N_OVER_2, SQRT_N_OVER_3
from kmcsvm.pipeline import (
    BenchReport,
    EvalReport,
    WindowConfig,
    bench_compare,
    evaluate_offline,
    online_evaluate,
    read_reports,
    train_kmc_svm,
    window_bounds,
    write_reports,
)
from kmcsvm.svm import ConvergenceError, SvmModel, TrainConfig, predict, sv_count, train_smo

from synth import blob_dataset

CFG = TrainConfig(128.0, 2**-9)
# Minimum sign agreement between kMC-SVM and plain SVM on a probe grid for
# overlapping blobs. scripts/pilot_agreement.py saw a minimum of 0.96 over
# 40 seeds.
PROBE_AGREEMENT = 0.90


def test_report_ratios():
    r = EvalReport(3, 4, 0, 5)
    assert r.lambda_agg == 3 / 4
    assert r.lambda_mod == 0.0
    assert r.counts == (3, 4, 0, 5)
    assert r.n_evaluated == 9


def test_report_absent_class():
    r = EvalReport(0, 0, 2, 2)
    assert r.lambda_agg is None and r.lambda_mod == 1.0


@pytest.mark.parametrize("counts", [(5, 4, 0, 0), (-1, 2, 0, 0), (0, 0, 3, 2)])
def test_report_rejects_inconsistent_counts(counts):
    with pytest.raises(ValueError):
        EvalReport(*counts)


def test_report_from_predictions_and_merge():
    r = EvalReport.from_predictions([1, 1, -1, -1, -1], [1, -1, -1, -1, 1])
    assert r.counts == (1, 2, 2, 3)
    m = r.merged(EvalReport(1, 1, 0, 0))
    assert m.counts == (2, 3, 2, 3)
    with pytest.raises(ValueError):
        r.merged(EvalReport(0, 0, 0, 0, "online"))
    assert EvalReport.from_dict(r.to_dict()) == r


@given(st.lists(st.sampled_from([1, -1]), min_size=1, max_size=50), st.data())
def test_report_counts_bounded(truth, data):
    pred = data.draw(st.lists(st.sampled_from([1, -1]), min_size=len(truth), max_size=len(truth)))
    r = EvalReport.from_predictions(truth, pred)
    for lam in (r.lambda_agg, r.lambda_mod):
        assert lam is None or 0 <= lam <= 1
    assert r.k_all_agg + r.k_all_mod == len(truth)


def test_window_length():
    assert WindowConfig().length == 70
    assert WindowConfig(1.0, 10).length == 10
    with pytest.raises(ValueError):
        WindowConfig(0.001, 50)


@pytest.mark.parametrize("n, count", [(69, 0), (70, 1), (71, 1), (700, 10)])
def test_window_count(n, count):
    assert len(window_bounds(n, WindowConfig())) == count


@given(st.integers(0, 5000), st.floats(0.02, 5), st.floats(1, 200))
def test_windows_disjoint_and_full(n, tau, rate):
    assume(tau * rate >= 0.5)
    wc = WindowConfig(tau, rate)
    b = window_bounds(n, wc)
    assert len(b) == n // wc.length
    assert all(stop - start == wc.length for start, stop in b)
    assert all(b[i][1] == b[i + 1][0] for i in range(len(b) - 1))
    assert not b or b[-1][1] <= n


def trained():
    ds = blob_dataset(300, seed=1)
    return ds, train_kmc_svm(ds, SQRT_N_OVER_3, CFG)


def test_kmc_trains_on_centroids():
    ds, res = trained()
    assert [len(c) for c in res.clusters] == [10, 10]
    assert sv_count(res.model) <= 20
    assert res.cluster_seconds > 0 and res.train_seconds > 0
    assert res.total_seconds == res.cluster_seconds + res.train_seconds


def test_boundary_agrees_with_plain_svm():
    ds = blob_dataset(300, seed=2, spread=4.0, centers=((75.0, 0.65), (45.0, 0.35)))
    kmc = train_kmc_svm(ds, SQRT_N_OVER_3, CFG).model
    plain = train_smo(ds.X, ds.y, CFG)
    grid = np.column_stack([g.ravel() for g in np.meshgrid(np.linspace(20, 100, 41), np.linspace(0, 1, 21))])
    assert np.mean(predict(kmc, grid) == predict(plain, grid)) >= PROBE_AGREEMENT


def test_online_stream_too_short():
    _, res = trained()
    stream = Dataset(np.full((69, 2), (50.0, 0.5)), np.ones(69, int))
    with pytest.raises(DatasetError):
        online_evaluate(res.model, stream)


def test_online_single_driver_stream():
    _, res = trained()
    stream = blob_dataset(350, seed=9).of_label(1)
    rep = online_evaluate(res.model, stream)
    assert rep.mode == "online"
    assert rep.k_all_agg == 5 and rep.k_all_mod == 0


def test_online_window_mean_is_what_gets_classified():
    # two windows straddling the boundary; each mean sits squarely in one class
    _, res = trained()
    w = np.vstack([np.tile((72.0, 0.62), (35, 1)), np.tile((68.0, 0.58), (35, 1)),
                   np.tile((48.0, 0.38), (35, 1)), np.tile((52.0, 0.42), (35, 1))])
    stream = Dataset(w, [1] * 70 + [-1] * 70)
    rep = online_evaluate(res.model, stream)
    assert rep.counts == (1, 1, 1, 1)


def test_online_truth_is_window_majority():
    model = SvmModel([[0.0, 0.0]], [1], [1e-9], 1.0, 1.0, 1.0)  # always +1
    y = [1] * 40 + [-1] * 30 + [-1] * 50 + [1] * 20
    stream = Dataset(np.zeros((140, 2)), y)
    rep = online_evaluate(model, stream)
    assert (rep.k_all_agg, rep.k_all_mod) == (1, 1)


def test_online_is_deterministic():
    _, res = trained()
    stream = blob_dataset(500, seed=3).of_label(-1)
    assert online_evaluate(res.model, stream) == online_evaluate(res.model, stream)


def test_offline_perfect():
    ds, res = trained()
    easy = blob_dataset(200, seed=4, spread=1.0, centers=((90.0, 0.9), (30.0, 0.1)))
    rep = evaluate_offline(res.model, easy, SQRT_N_OVER_3)
    assert rep.lambda_agg == rep.lambda_mod == 1.0
    assert rep.k_all_agg == rep.k_all_mod == 8


def test_label_flip_swaps_counts():
    _, res = trained()
    test = blob_dataset(200, seed=5)
    flipped = Dataset(test.X, -test.y)
    a = evaluate_offline(res.model, test, None)
    b = evaluate_offline(res.model, flipped, None)
    assert (b.k_cor_agg, b.k_all_agg) == (a.k_all_mod - a.k_cor_mod, a.k_all_mod)
    assert (b.k_cor_mod, b.k_all_mod) == (a.k_all_agg - a.k_cor_agg, a.k_all_agg)
    c = evaluate_offline(res.model, test, SQRT_N_OVER_3)
    d = evaluate_offline(res.model, flipped, SQRT_N_OVER_3)
    assert (d.k_all_agg, d.k_all_mod) == (c.k_all_mod, c.k_all_agg)


def test_bench_compare_small():
    train = blob_dataset(400, seed=6)
    test = blob_dataset(150, seed=7)
    kmc, svm = bench_compare(train, test, SQRT_N_OVER_2, CFG, seed=1)
    assert (kmc.method, svm.method) == ("kmc_svm", "svm")
    assert kmc.sv_count < svm.sv_count
    assert kmc.train_seconds > 0 and svm.train_seconds > 0
    assert kmc.converged and svm.converged
    assert kmc.checksum == svm.checksum == train.checksum() + test.checksum()
    assert kmc.report.counts == evaluate_offline(train_kmc_svm(train, SQRT_N_OVER_2, CFG, 1).model,
                                                 test, SQRT_N_OVER_2, 1).counts


def test_bench_reports_plain_non_convergence(monkeypatch):
    real = pl.train_smo

    def flaky(X, y, cfg, seed=0):
        model = real(X, y, cfg, seed)
        if len(y) > 100:
            raise ConvergenceError("forced", model, 1.0)
        return model

    monkeypatch.setattr(pl, "train_smo", flaky)
    kmc, svm = bench_compare(blob_dataset(200, seed=8), blob_dataset(60, seed=9), SQRT_N_OVER_3, CFG)
    assert kmc.converged and not svm.converged
    assert svm.sv_count > 0


def test_reports_round_trip(tmp_path):
    recs = [
        BenchReport("kmc_svm", 1.5, 12, EvalReport(3, 4, 5, 5), 100, True, "abc"),
        EvalReport(1, 2, 0, 0, "online"),
    ]
    write_reports(tmp_path / "r.jsonl", recs)
    back = read_reports(tmp_path / "r.jsonl")
    assert back[0] == recs[0] and back[0].checksum == "abc"
    assert back[1] == recs[1]


def test_future_report_version_refused(tmp_path):
    p = tmp_path / "r.jsonl"
    p.write_text('{"format": "kmcsvm-report v9", "kind": "eval"}\n')
    with pytest.raises(ValueError, match="newer"):
        read_reports(p)


def test_bench_report_validates():
    with pytest.raises(ValueError):
        BenchReport("svm", 0.0, 1, EvalReport(0, 0, 0, 0))
    with pytest.raises(ValueError):
        BenchReport("libsvm", 1.0, 1, EvalReport(0, 0, 0, 0))
