"""Sign agreement between kMC-SVM and plain SVM on a probe grid.

Sweeps seeds over the blob setup used in tests/test_pipeline.py and prints
the spread of agreement fractions; the test threshold sits below the
observed minimum with some margin.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from kmcsvm.kmeans import SQRT_N_OVER_3
from kmcsvm.pipeline import train_kmc_svm
from kmcsvm.svm import TrainConfig, predict, train_smo

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))
from synth import blob_dataset  # noqa: E402


def agreement(seed, cfg):
    ds = blob_dataset(300, seed=seed, spread=4.0, centers=((75.0, 0.65), (45.0, 0.35)))
    kmc = train_kmc_svm(ds, SQRT_N_OVER_3, cfg, seed).model
    plain = train_smo(ds.X, ds.y, cfg)
    grid = np.column_stack([g.ravel() for g in np.meshgrid(np.linspace(20, 100, 41), np.linspace(0, 1, 21))])
    return float(np.mean(predict(kmc, grid) == predict(plain, grid)))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=40)
    args = ap.parse_args()
    cfg = TrainConfig(128.0, 2**-9)
    vals = np.array([agreement(s, cfg) for s in range(args.seeds)])
    print(f"seeds={args.seeds} min={vals.min():.3f} p05={np.quantile(vals, 0.05):.3f} "
          f"median={np.median(vals):.3f} max={vals.max():.3f}")


if __name__ == "__main__":
    main()
