import numpy as np
import pytest
from hypothesis import settings

from kmcsvm.dataset import Dataset

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

CRITERIA = {
    1: "dual solver matches dense QP oracle",
    2: "KKT conditions on n=500 datasets",
    3: "k-means descent, centroid-is-mean, conservation",
    4: "grid construction and argmax",
    5: "window arithmetic",
    6: "kMC-SVM at least 2x faster with fewer SVs",
    7: "per-class accuracy within 10 points of plain SVM",
    8: "per-class accuracy count identities",
    9: "seeded end-to-end determinism",
}
_outcomes = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion exercised by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.skipped:
        return
    if rep.when == "call" or rep.failed:
        n = mark.args[0]
        _outcomes[n] = _outcomes.get(n, True) and rep.passed


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance")
    for n, desc in CRITERIA.items():
        if n in _outcomes:
            status = "PASS" if _outcomes[n] else "FAIL"
            terminalreporter.write_line(f"criterion {n}: {status}  {desc}")


@pytest.fixture
def two_blobs():
    """Two tight, well separated telemetry blobs of 50 points each."""
    rng = np.random.default_rng(11)
    a = rng.normal((80.0, 0.8), (1.0, 0.02), size=(50, 2))
    m = rng.normal((30.0, 0.2), (1.0, 0.02), size=(50, 2))
    X = np.vstack([a, m])
    y = np.r_[np.ones(50, int), -np.ones(50, int)]
    return Dataset(X, y)

