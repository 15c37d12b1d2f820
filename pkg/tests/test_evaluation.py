import warnings

import numpy as np
import pytest

from hddrul import evaluation as ev
from hddrul.errors import ConfigError, UndefinedMetricError
from hddrul.preprocess import WindowedDataset
from oracles import mae_sorted_fsum


def test_accuracy_rounding_cases():
    assert ev.accuracy_rounded([24.4], [24.0]) == 1.0
    assert ev.accuracy_rounded([24.6], [24.0]) == 0.0
    assert ev.accuracy_rounded([24.5], [25.0]) == 1.0


def test_rounding_half_away_from_zero_negative():
    assert ev.round_half_away_from_zero([-0.5, -1.5, -0.4]).tolist() == [-1.0, -2.0, 0.0]
    assert ev.accuracy_rounded([-0.5], [-1.0]) == 1.0


def test_mae_cases():
    assert ev.mae([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert ev.mae([1.0, 3.0], [2.0, 2.0]) == 1.0


def test_mae_matches_summation_oracle(rng):
    preds = rng.normal(size=100) * 17
    actuals = rng.normal(size=100) * 17
    assert ev.mae(preds, actuals) == pytest.approx(mae_sorted_fsum(preds, actuals), abs=1e-12)


def test_r2_cases(rng):
    actuals = rng.normal(size=50) * 3 + 10
    assert ev.r2(actuals, actuals) == 1.0
    assert ev.r2(np.full(50, actuals.mean()), actuals) == pytest.approx(0.0, abs=1e-9)
    far = np.full(50, actuals.mean() + 10 * actuals.std())
    assert ev.r2(far, actuals) < 0.0
    with pytest.raises(UndefinedMetricError):
        ev.r2(actuals, np.full(50, 1.0))


def test_metric_permutation_invariance(rng):
    preds = rng.normal(size=60)
    actuals = rng.normal(size=60)
    perm = rng.permutation(60)
    assert ev.accuracy_rounded(preds, actuals) == ev.accuracy_rounded(preds[perm], actuals[perm])
    assert ev.mae(preds, actuals) == pytest.approx(ev.mae(preds[perm], actuals[perm]), rel=1e-12)
    assert ev.r2(preds, actuals) == pytest.approx(ev.r2(preds[perm], actuals[perm]), rel=1e-9)


def _dataset(rng, n=40):
    targets = rng.integers(0, 31, size=n).astype(float)
    windows = rng.normal(size=(n, 3, 2))
    provenance = [(f"D{i:03d}", None) for i in range(n)]
    return WindowedDataset(windows=windows, targets=targets, provenance=provenance,
                           feature_ids=[7, 9])


def test_evaluate_oracle_predictor(rng):
    dataset = _dataset(rng)
    captured = {}

    def oracle(windows):
        captured["shape"] = windows.shape
        return dataset.targets.copy()

    report = ev.evaluate(oracle, dataset, model_id="oracle", cohort_id="test")
    assert captured["shape"] == dataset.windows.shape
    assert report.accuracy == 1.0
    assert report.r2 == 1.0
    assert report.mae == 0.0
    assert np.all(report.pairs[:-1, 0] <= report.pairs[1:, 0])  # sorted by actual


def test_evaluate_mean_predictor_r2_zero(rng):
    dataset = _dataset(rng)
    mean = dataset.targets.mean()
    report = ev.evaluate(lambda w: np.full(len(w), mean), dataset,
                         model_id="mean", cohort_id="test")
    assert report.r2 == pytest.approx(0.0, abs=1e-9)


def test_evaluate_shape_mismatch(rng):
    dataset = _dataset(rng)
    with pytest.raises(ConfigError):
        ev.evaluate(lambda w: np.zeros(3), dataset, model_id="bad", cohort_id="test")


def test_report_csv_roundtrip_and_recompute(rng, tmp_path):
    dataset = _dataset(rng)
    preds = dataset.targets + rng.normal(size=dataset.n_samples) * 0.7
    report = ev.evaluate_pairs(dataset.targets, preds, model_id="m", cohort_id="c", timesteps=15)
    path = tmp_path / "report.csv"
    ev.write_report_csv(report, path)
    back = ev.read_report_csv(path)

    assert back.model_id == "m" and back.cohort_id == "c" and back.timesteps == 15
    actual, predicted = back.pairs[:, 0], back.pairs[:, 1]
    assert ev.accuracy_rounded(predicted, actual) == pytest.approx(back.accuracy, abs=1e-12)
    assert ev.mae(predicted, actual) == pytest.approx(back.mae, abs=1e-12)
    assert ev.r2(predicted, actual) == pytest.approx(back.r2, abs=1e-12)


def test_report_bytes_deterministic(rng, tmp_path):
    dataset = _dataset(rng)
    preds = dataset.targets + 0.25
    report = ev.evaluate_pairs(dataset.targets, preds, model_id="m", cohort_id="c")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    ev.write_report_csv(report, a)
    ev.write_report_csv(report, b)
    assert a.read_bytes() == b.read_bytes()


def test_noise_does_not_help_in_expectation(rng):
    actuals = rng.integers(0, 31, size=200).astype(float)
    preds = actuals + rng.uniform(-0.3, 0.3, size=200)
    clean = ev.accuracy_rounded(preds, actuals)
    noisy = [
        ev.accuracy_rounded(preds + np.random.default_rng(s).uniform(-0.5, 0.5, 200), actuals)
        for s in range(30)
    ]
    assert clean >= np.mean(noisy)


def test_run_matrix_counts_and_summary(small_frames, tmp_path, rng):
    from hddrul import forest, neural
    from hddrul import preprocess as pp

    selected = small_frames[0].feature_ids
    std = [pp.standardize_per_device(f) for f in small_frames]
    models = {"lstm": {}, "bilstm": {}}
    for arch, bi in (("lstm", False), ("bilstm", True)):
        for timesteps in (2, 3):
            wd = pp.window(std, timesteps)
            settings = neural.TrainSettings(bidirectional=bi, hidden_size=3, epochs=1,
                                            batch_size=32, seed=timesteps)
            model, _ = neural.train(settings, wd)
            models[arch][timesteps] = model
    X, y = ev.per_day_rows(small_frames, selected)
    models["forest"] = forest.fit_forest(X, y, n_estimators=3, seed=0, feature_ids=selected)

    cohorts = {"test60": small_frames, "test120": small_frames}
    reports = ev.run_matrix(models, cohorts)
    assert len(reports) == 2 * (2 * 2 + 1)
    assert {r.cohort_id for r in reports} == {"test60", "test120"}

    summary = tmp_path / "summary.csv"
    subset = [r for r in reports if r.cohort_id == "test60"]
    ev.write_summary_csv(subset, summary)
    lines = summary.read_text().splitlines()
    assert lines[0] == "model,timesteps,accuracy,r2,mae"
    assert lines[1].startswith("LSTM,2") and lines[-1].startswith("RF,NA")


def test_run_matrix_skips_missing_models(small_frames):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        reports = ev.run_matrix({"lstm": {}, "bilstm": {}, "forest": None},
                                {"test60": small_frames})
    assert reports == []
    assert any("missing" in str(w.message) for w in caught)


def test_per_day_rows_alignment(small_frames):
    from hddrul import preprocess as pp

    X, y = ev.per_day_rows(small_frames, small_frames[0].feature_ids)
    wd = pp.window([pp.standardize_per_device(f) for f in small_frames], 3)
    assert len(y) == wd.n_samples
    assert np.array_equal(y, wd.targets)
