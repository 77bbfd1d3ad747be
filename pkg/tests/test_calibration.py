import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from optotact import physics
from optotact.calibration import (
    FACTORY_K,
    CalibrationLog,
    CalibrationMatrix,
    SingularFitError,
    WrenchCalibrator,
    estimate_shear,
    evaluate,
    factory_matrix,
    fit_calibration,
    ideal_matrix,
    r_squared,
    rmse,
    tare,
)
from optotact.physics import AdcModel, SensorReading, StructureSpec, Wrench

RATED = np.array([6.0, 0.1, 0.1])


def synth_log(k_true, n, seed, baseline=None):
    """Noiseless integer-count log that lies exactly on the linear model."""
    rng = np.random.default_rng(seed)
    baseline = np.zeros(3) if baseline is None else np.asarray(baseline, float)
    wrenches = rng.uniform(-RATED, RATED, size=(n, 3)) * 0.98
    tared = np.rint(np.linalg.solve(k_true, wrenches.T).T)
    exact = tared @ k_true.T
    return tared + baseline, exact


class TestFactoryMatrix:
    def test_published_entries(self):
        m = factory_matrix()
        assert m.k[0, 0] == -0.0201
        assert m.k[1, 0] == 3.2639e-4
        assert m.k[2, 2] == 6.6255e-4
        assert np.array_equal(m.baseline, np.zeros(3))

    def test_zero_counts_zero_wrench(self):
        assert factory_matrix().estimate([0, 0, 0]) == pytest.approx([0, 0, 0], abs=0)

    def test_first_column(self):
        wrench = factory_matrix().estimate([1, 0, 0])
        assert wrench == pytest.approx([-0.0201, 3.2639e-4, 1.709e-5], abs=0)

    def test_column_sums_times_hundred(self):
        wrench = factory_matrix().estimate([100, 100, 100])
        assert wrench == pytest.approx([-5.77, 7.843e-3, 4.3857e-2], rel=1e-12)

    def test_unit_vectors_recover_columns_exactly(self):
        m = factory_matrix()
        for j, unit in enumerate(np.eye(3)):
            assert np.array_equal(m.estimate(unit), FACTORY_K[:, j])


class TestTare:
    def test_single_reading(self):
        reading = SensorReading(0, (512, 512, 512))
        assert tare([reading]) == pytest.approx([512, 512, 512], abs=0)

    def test_per_channel_mean(self):
        counts = np.array([[511, 511, 511], [512, 512, 512], [513, 513, 513]])
        assert tare(counts) == pytest.approx([512, 512, 512], abs=0)

    def test_mixed_channels(self):
        counts = np.array([[510, 512, 514], [512, 512, 512]])
        assert tare(counts) == pytest.approx([511, 512, 513], abs=0)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            tare([])


class TestFit:
    def test_exact_recovery(self):
        counts, wrenches = synth_log(FACTORY_K, n=50, seed=0)
        matrix, report = fit_calibration(counts, wrenches)
        assert np.abs(matrix.k - FACTORY_K).max() <= 1e-9
        assert np.abs(matrix.estimate(counts) - wrenches).max() <= 1e-6
        assert report.condition_number < 1e8

    def test_recovery_with_baseline(self):
        baseline = np.array([511.5, 512.0, 510.0])
        counts, wrenches = synth_log(FACTORY_K, n=60, seed=3, baseline=baseline)
        matrix, _ = fit_calibration(counts, wrenches, baseline=baseline)
        assert np.abs(matrix.k - FACTORY_K).max() <= 1e-9

    def test_constant_counts_singular(self):
        counts = np.tile([500.0, 600.0, 700.0], (20, 1))
        wrenches = np.random.default_rng(0).normal(size=(20, 3))
        with pytest.raises(SingularFitError, match="direction"):
            fit_calibration(counts, wrenches)

    def test_nine_rows_interpolate(self):
        counts, wrenches = synth_log(FACTORY_K, n=9, seed=5)
        matrix, report = fit_calibration(counts, wrenches)
        residual = matrix.estimate(counts) - wrenches
        assert np.abs(residual).max() <= 1e-9

    def test_too_few_rows_rejected(self):
        counts, wrenches = synth_log(FACTORY_K, n=8, seed=1)
        with pytest.raises(ValueError, match="9"):
            fit_calibration(counts, wrenches)

    def test_fit_idempotence(self):
        rng = np.random.default_rng(9)
        counts = rng.uniform(0, 1023, size=(40, 3))
        wrenches = rng.normal(size=(40, 3))
        matrix, _ = fit_calibration(counts, wrenches)
        refit, _ = fit_calibration(counts, matrix.estimate(counts))
        assert np.abs(refit.k - matrix.k).max() <= 1e-9

    def test_noise_floor_over_twenty_seeds(self, structure):
        # Held-out RMSE stays under 3 sigma times the true per-axis gain.
        adc_true = AdcModel(noise_sigma=0.0)
        k_true = ideal_matrix(structure, adc_true).k
        gain_bound = 3.0 * 1.0 * np.linalg.norm(k_true, axis=1)
        for seed in range(20):
            rng = np.random.default_rng(seed)
            wrenches = rng.uniform(-RATED, RATED, size=(300, 3))
            adc = AdcModel(noise_sigma=1.0, rng_seed=seed)
            counts, _ = physics.simulate_counts(wrenches, structure, adc)
            baseline = tare(physics.simulate_counts(np.zeros((50, 3)), structure, adc)[0].astype(float))
            matrix, _ = fit_calibration(counts[:200].astype(float), wrenches[:200], baseline)
            report = evaluate(matrix, counts[200:].astype(float), wrenches[200:])
            assert (report.rmse <= gain_bound).all()

    @given(scale=st.floats(0.1, 10.0, allow_nan=False))
    @settings(max_examples=25, deadline=None)
    def test_scale_equivariance(self, scale):
        matrix = factory_matrix()
        tared = np.array([120.0, -40.0, 65.0])
        assert matrix.estimate(tared * scale) == pytest.approx(
            matrix.estimate(tared) * scale, rel=1e-12
        )


class TestEstimatorApi:
    def test_fit_predict_round_trip(self):
        counts, wrenches = synth_log(FACTORY_K, n=30, seed=2)
        model = WrenchCalibrator().fit(counts, wrenches)
        assert np.abs(model.predict(counts) - wrenches).max() <= 1e-6
        assert model.report_.condition_number > 0

    def test_predict_before_fit_raises(self):
        with pytest.raises(NotFittedError):
            WrenchCalibrator().predict(np.zeros((4, 3)))

    def test_get_params_and_clone(self):
        model = WrenchCalibrator(cond_limit=1e6)
        assert model.get_params()["cond_limit"] == 1e6
        assert clone(model).cond_limit == 1e6

    def test_score_is_r2(self):
        counts, wrenches = synth_log(FACTORY_K, n=30, seed=7)
        model = WrenchCalibrator().fit(counts, wrenches)
        assert model.score(counts, wrenches) == pytest.approx(1.0, abs=1e-9)


class TestMetrics:
    def test_rmse_identity(self):
        assert rmse([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0

    def test_rmse_hand_value(self):
        assert rmse([1, 2, 3], [1, 2, 4]) == pytest.approx(0.57735, abs=1e-5)

    def test_rmse_constant_offset(self):
        pred = np.array([4.0, -1.0, 2.5]) + 0.75
        assert rmse(pred, [4.0, -1.0, 2.5]) == pytest.approx(0.75, rel=1e-12)

    def test_rmse_errors(self):
        with pytest.raises(ValueError):
            rmse([], [])
        with pytest.raises(ValueError):
            rmse([1.0], [1.0, 2.0])

    def test_r2_identity(self):
        assert r_squared([0.0, 1.0, 5.0], [0.0, 1.0, 5.0]) == 1.0

    def test_r2_hand_value(self):
        assert r_squared([0, 1, 2, 2], [0, 1, 2, 3]) == pytest.approx(0.8, rel=1e-12)

    def test_r2_mean_predictor_is_zero(self):
        truth = np.array([0.0, 1.0, 2.0, 3.0])
        assert r_squared(np.full(4, truth.mean()), truth) == pytest.approx(0.0, abs=1e-12)

    def test_r2_constant_truth_undefined(self):
        with pytest.raises(ValueError, match="undefined"):
            r_squared([1.0, 2.0], [3.0, 3.0])

    @given(st.lists(st.floats(-100, 100), min_size=2, max_size=30))
    @settings(max_examples=40, deadline=None)
    def test_rmse_zero_and_r2_one_on_self(self, values):
        values = np.asarray(values)
        assert rmse(values, values) == 0.0
        if values.std() > 0:
            assert r_squared(values, values) == 1.0


class TestShear:
    def test_hand_value(self):
        fx, fy = estimate_shear(Wrench(0.0, 0.0, 0.02), contact_height=0.02)
        assert (fx, fy) == (1.0, 0.0)

    def test_zero_moments(self):
        assert estimate_shear(Wrench(5.0, 0.0, 0.0), 0.01) == (0.0, 0.0)

    def test_inverse_proportionality(self):
        w = Wrench(0.0, 0.03, -0.04)
        fx1, fy1 = estimate_shear(w, 0.01)
        fx2, fy2 = estimate_shear(w, 0.02)
        assert fx1 == pytest.approx(2 * fx2) and fy1 == pytest.approx(2 * fy2)

    def test_positive_x_force_convention(self):
        # +x surface force at height h shows up as +my.
        fx, fy = estimate_shear(Wrench(0.0, 0.0, 0.05), 0.05)
        assert fx > 0 and fy == 0

    def test_bad_height(self):
        with pytest.raises(ValueError):
            estimate_shear(Wrench(), 0.0)


class TestPersistence:
    def test_matrix_round_trip(self, tmp_path):
        matrix = CalibrationMatrix(FACTORY_K, np.array([511.5, 512.0, 512.5]))
        path = tmp_path / "matrix.csv"
        matrix.save(path)
        loaded = CalibrationMatrix.load(path)
        assert np.array_equal(loaded.k, matrix.k)
        assert np.array_equal(loaded.baseline, matrix.baseline)

    def test_log_round_trip(self, tmp_path):
        counts, wrenches = synth_log(FACTORY_K, n=12, seed=4, baseline=np.full(3, 512.0))
        log = CalibrationLog(np.arange(12) * 1000, counts.astype(int), wrenches)
        path = tmp_path / "log.csv"
        log.save_csv(path)
        loaded = CalibrationLog.load_csv(path)
        assert np.array_equal(loaded.timestamps, log.timestamps)
        assert np.array_equal(loaded.counts, log.counts)
        assert np.array_equal(loaded.wrenches, log.wrenches)

    def test_unsorted_timestamps_rejected(self):
        with pytest.raises(ValueError, match="non-decreasing"):
            CalibrationLog(np.array([5, 3]), np.zeros((2, 3)), np.zeros((2, 3)))

    def test_report_text_and_csv(self, tmp_path):
        counts, wrenches = synth_log(FACTORY_K, n=20, seed=6)
        _, report = fit_calibration(counts, wrenches)
        text = report.as_text()
        assert "Fz" in text and "condition_number" in text
        path = tmp_path / "report.csv"
        report.to_csv(path)
        assert path.read_text().startswith("axis,rmse,r_squared")


class TestIdealMatrix:
    def test_inverts_noiseless_chain(self, structure, adc_quiet):
        matrix = ideal_matrix(structure, adc_quiet)
        wrenches = np.random.default_rng(0).uniform(-RATED, RATED, size=(100, 3))
        counts, _ = physics.simulate_counts(wrenches, structure, adc_quiet)
        estimates = matrix.estimate(counts)
        # Only quantization error remains: under one LSB through each gain.
        assert np.abs(estimates - wrenches).max(axis=0) == pytest.approx(
            [0, 0, 0], abs=5e-2
        )
