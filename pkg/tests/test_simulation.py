import csv
import json
import math

import numpy as np
import pytest

from segiwv.inference import InferenceOptions
from segiwv.simulation import (
    HEADER, SIGMA2_GRID, TRUE_K, SimConfig, StudyReport, generate, hausdorff, pseudo_months, replicate_seed, rmse,
    run_replicate, run_study, study_tables, true_mean, write_study,
)


def test_grid():
    assert SIGMA2_GRID == (0.1, 0.3, 0.5, 0.7, 0.9, 1.1, 1.3, 1.5)


def test_config_defaults():
    c = SimConfig()
    assert (c.n, c.K, c.years) == (400, 7, 4)
    with pytest.raises(ValueError):
        SimConfig(changepoints=(10, 5))
    with pytest.raises(ValueError):
        SimConfig(changepoints=(400,))
    with pytest.raises(ValueError):
        SimConfig(sigma1=-1)


def test_pseudo_calendar():
    m = pseudo_months(SimConfig())
    assert m[:50].tolist() == [1] * 50
    assert m[50:100].tolist() == [2] * 50
    assert m[100] == 1 and m[-1] == 2


def test_true_mean_alternates():
    mu = true_mean(SimConfig())
    assert mu[:55].tolist() == [0.0] * 55
    assert mu[55:77].tolist() == [1.0] * 22
    assert mu[366:].tolist() == [0.0] * 34


def test_noiseless_series_is_signal():
    ts, truth = generate(SimConfig(sigma1=0, sigma2=0))
    t = np.arange(1, 401)
    assert np.allclose(ts.values, truth.mu + 0.7 * np.cos(2 * np.pi * t / 100))
    assert np.array_equal(ts.day_phase(), t)


def test_noise_levels_by_month():
    ts, truth = generate(SimConfig(sigma1=0.5, sigma2=0.1), seed=5)
    resid = ts.values - truth.mu - truth.f
    m = pseudo_months(SimConfig())
    assert resid[m == 1].std() == pytest.approx(0.5, rel=0.15)
    assert resid[m == 2].std() == pytest.approx(0.1, rel=0.15)


def test_seed_reproducible():
    a, _ = generate(SimConfig(), seed=replicate_seed(42, 0.5, 0.5, 3))
    b, _ = generate(SimConfig(), seed=replicate_seed(42, 0.5, 0.5, 3))
    c, _ = generate(SimConfig(), seed=replicate_seed(42, 0.5, 0.5, 4))
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


@pytest.mark.parametrize(
    "truth, est, expected",
    [
        ([55, 77, 177], [55, 77, 177], (0.0, 0.0)),
        ([50], [48, 90], (40.0, 2.0)),
        ([50, 100], [50], (0.0, 50.0)),
    ],
)
def test_hausdorff_fixtures(truth, est, expected):
    assert hausdorff(truth, est) == expected


def test_hausdorff_empty_estimate():
    d1, d2 = hausdorff([10], [])
    assert math.isnan(d1) and math.isnan(d2)
    with pytest.raises(ValueError):
        hausdorff([], [3])


def test_rmse():
    x = np.arange(5.0)
    assert rmse(x, x) == 0
    assert rmse(x, x + 0.3) == pytest.approx(0.3)
    with pytest.raises(ValueError):
        rmse(x, x[:3])


FAST = InferenceOptions(K_max=10, accelerate=True)


def test_replicate_record():
    rec = run_replicate(SimConfig(sigma1=0.5, sigma2=0.1), 0, ["BM1", "mBIC"], FAST)
    crits = [r["criterion"] for r in rec["reports"]]
    assert crits == ["BM1", "mBIC", TRUE_K]
    true = rec["reports"][-1]
    assert true["K_hat"] == 7 and true["K_diff"] == 0
    assert true["d1"] <= 3
    assert abs(rec["sigma1_error"]) < 0.15 and abs(rec["sigma2_error"]) < 0.05
    json.dumps(rec)


def test_zero_replicates():
    rep = run_study(SimConfig(replicates=0), opts=FAST)
    assert rep.records == []
    assert all(rows == [] for rows in study_tables(rep).values())


def test_study_outputs(tmp_path):
    cfg = SimConfig(replicates=2, seed=1)
    rep = run_study(cfg, ["BM1"], FAST, sigma1_values=[0.5], sigma2_values=[0.1, 0.5], threads=2)
    assert [(r["sigma2"], r["replicate"]) for r in rep.records] == [(0.1, 0), (0.1, 1), (0.5, 0), (0.5, 1)]
    paths = write_study(rep, tmp_path)
    names = sorted(p.name for p in paths)
    assert names == ["fig3_sigma_errors.csv", "fig4_quality.csv", "fig5_detections.csv", "fig6_rmse_f.csv",
                     "replicates.jsonl"]
    for p in paths:
        if p.suffix == ".csv":
            with open(p) as fh:
                rows = list(csv.reader(fh))
            assert tuple(rows[0]) == HEADER
            assert len(rows) > 1
    lines = (tmp_path / "replicates.jsonl").read_text().splitlines()
    assert len(lines) == 4


def test_study_is_deterministic_across_threads():
    cfg = SimConfig(replicates=2, seed=9)
    a = run_study(cfg, ["mBIC"], FAST, threads=1)
    b = run_study(cfg, ["mBIC"], FAST, threads=2)
    assert a.records == b.records


def test_detection_rate():
    rep = StudyReport(SimConfig(), [
        {"sigma1": 0.5, "sigma2": 0.1, "reports": [{"criterion": "BM1", "changepoints": [55, 100]}]},
        {"sigma1": 0.5, "sigma2": 0.1, "reports": [{"criterion": "BM1", "changepoints": [56]}]},
    ])
    assert rep.detection_rate("BM1", 55) == 0.5
    assert rep.detection_rate("BM1", 55, window=1) == 1.0
    assert math.isnan(rep.detection_rate("Lav", 55))
