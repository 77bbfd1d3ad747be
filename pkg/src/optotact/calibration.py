"""Count-to-wrench calibration: fitting, evaluation, metrics and persistence.

The sensor model is a plain linear map w = k @ (counts - baseline) with the
rest-position offset handled by explicit taring, so the regression itself
carries no intercept.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from . import physics
from .physics import AdcModel, SensorReading, StructureSpec, Wrench

__all__ = [
    "SingularFitError",
    "FACTORY_K",
    "factory_matrix",
    "ideal_matrix",
    "CalibrationMatrix",
    "FitReport",
    "CalibrationLog",
    "WrenchCalibrator",
    "fit_calibration",
    "evaluate",
    "tare",
    "rmse",
    "r_squared",
    "estimate_shear",
]

AXIS_NAMES = ("Fz", "Mx", "My")
AXIS_UNITS = ("N", "N*m", "N*m")


class SingularFitError(ValueError):
    """The tared count matrix does not span all three channels."""


# Calibration shipped with the reference unit, wrench per tared count.
FACTORY_K = np.array(
    [
        [-0.0201, -0.0109, -0.0267],
        [3.2639e-04, -1.0602e-04, -1.4194e-04],
        [0.1709e-04, -2.4107e-04, 6.6255e-04],
    ]
)


def factory_matrix() -> "CalibrationMatrix":
    """The stock calibration with a zero baseline."""
    return CalibrationMatrix(FACTORY_K.copy(), np.zeros(3))


def ideal_matrix(spec: StructureSpec, adc: AdcModel) -> "CalibrationMatrix":
    """Exact analytic calibration for a simulated structure.

    Inverts the noiseless chain: counts deviate from the rest level by
    -full_scale/gap_range times the deflection, so the wrench follows from the
    inverse deflection matrix.
    """
    deflection = physics.deflection_matrix(spec)
    counts_per_metre = adc.full_scale / spec.gap_range
    k = -np.linalg.inv(deflection) / counts_per_metre
    baseline = np.full(3, adc.full_scale * spec.gap_initial / spec.gap_range)
    return CalibrationMatrix(k, baseline)


@dataclass(frozen=True)
class CalibrationMatrix:
    """3x3 map from tared counts to (fz, mx, my) plus the tare baseline."""

    k: np.ndarray
    baseline: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.k, dtype=float)
        baseline = np.asarray(self.baseline, dtype=float)
        if k.shape != (3, 3):
            raise ValueError(f"k must be 3x3, got shape {k.shape}")
        if baseline.shape != (3,):
            raise ValueError(f"baseline must have 3 entries, got shape {baseline.shape}")
        if not (np.isfinite(k).all() and np.isfinite(baseline).all()):
            raise ValueError("calibration entries must be finite")
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "baseline", baseline)

    def estimate(self, counts) -> np.ndarray:
        """Wrench estimate for raw counts, shape (3,) or (n, 3)."""
        tared = np.asarray(counts, dtype=float) - self.baseline
        return tared @ self.k.T

    def estimate_wrench(self, reading: SensorReading) -> Wrench:
        return Wrench.from_array(self.estimate(reading.counts))

    def save(self, path) -> None:
        """Three k rows then one baseline row, comma separated."""
        rows = np.vstack([self.k, self.baseline[None, :]])
        np.savetxt(path, rows, delimiter=",", fmt="%.17g")

    @classmethod
    def load(cls, path) -> "CalibrationMatrix":
        rows = np.loadtxt(path, delimiter=",", dtype=float)
        if rows.shape != (4, 3):
            raise ValueError(f"expected 4 rows of 3 entries in {path}, got {rows.shape}")
        return cls(rows[:3], rows[3])


@dataclass(frozen=True)
class FitReport:
    """Per-axis residual metrics plus the design conditioning."""

    rmse: np.ndarray
    r_squared: np.ndarray
    residual_max: np.ndarray
    condition_number: float

    def as_text(self) -> str:
        lines = [f"{'axis':<6}{'unit':<6}{'rmse':>12}{'r_squared':>12}{'max_resid':>12}"]
        for i, (name, unit) in enumerate(zip(AXIS_NAMES, AXIS_UNITS)):
            lines.append(
                f"{name:<6}{unit:<6}{self.rmse[i]:>12.6g}"
                f"{self.r_squared[i]:>12.6g}{self.residual_max[i]:>12.6g}"
            )
        lines.append(f"condition_number: {self.condition_number:.6g}")
        return "\n".join(lines)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["axis", "rmse", "r_squared", "residual_max", "condition_number"])
            for i, name in enumerate(AXIS_NAMES):
                writer.writerow(
                    [
                        name,
                        f"{self.rmse[i]:.17g}",
                        f"{self.r_squared[i]:.17g}",
                        f"{self.residual_max[i]:.17g}",
                        f"{self.condition_number:.17g}",
                    ]
                )


@dataclass(frozen=True)
class CalibrationLog:
    """Paired count/wrench history with non-decreasing timestamps."""

    timestamps: np.ndarray
    counts: np.ndarray
    wrenches: np.ndarray

    def __post_init__(self):
        timestamps = np.asarray(self.timestamps, dtype=np.int64)
        counts = np.asarray(self.counts, dtype=np.int64)
        wrenches = np.asarray(self.wrenches, dtype=float)
        n = len(timestamps)
        if counts.shape != (n, 3) or wrenches.shape != (n, 3):
            raise ValueError(
                f"inconsistent log shapes: {timestamps.shape}, {counts.shape}, {wrenches.shape}"
            )
        if n > 1 and (np.diff(timestamps) < 0).any():
            raise ValueError("log timestamps must be non-decreasing")
        object.__setattr__(self, "timestamps", timestamps)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "wrenches", wrenches)

    def __len__(self) -> int:
        return len(self.timestamps)

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["t_ns", "v1", "v2", "v3", "fz", "mx", "my"])
            for t, v, w in zip(self.timestamps, self.counts, self.wrenches):
                writer.writerow(
                    [int(t), int(v[0]), int(v[1]), int(v[2])]
                    + [f"{x:.17g}" for x in w]
                )

    @classmethod
    def load_csv(cls, path) -> "CalibrationLog":
        with open(path) as handle:
            lines = [line for line in handle if line.strip()]
        if len(lines) < 2:
            raise ValueError(f"calibration log {path} is empty")
        data = np.loadtxt(lines[1:], delimiter=",", dtype=float, ndmin=2)
        if data.shape[1] != 7:
            raise ValueError(f"expected 7 columns in {path}, got {data.shape[1]}")
        return cls(data[:, 0].astype(np.int64), data[:, 1:4].astype(np.int64), data[:, 4:7])


def tare(readings) -> np.ndarray:
    """Per-channel mean counts over zero-load readings.

    Accepts a sequence of SensorReading or an (n, 3) count array.
    """
    if isinstance(readings, np.ndarray):
        counts = np.asarray(readings, dtype=float)
    else:
        readings = list(readings)
        if readings and isinstance(readings[0], SensorReading):
            counts = np.array([r.counts for r in readings], dtype=float)
        else:
            counts = np.asarray(readings, dtype=float)
    counts = np.atleast_2d(counts)
    if counts.size == 0:
        raise ValueError("cannot tare from zero readings")
    if counts.shape[1] != 3:
        raise ValueError(f"expected 3 channels, got shape {counts.shape}")
    return counts.mean(axis=0)


def rmse(pred, truth) -> float:
    """Root mean squared error between two equal-length sequences."""
    pred = np.asarray(pred, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if pred.size == 0 or pred.size != truth.size:
        raise ValueError(f"rmse needs equal nonzero lengths, got {pred.size} and {truth.size}")
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def r_squared(pred, truth) -> float:
    """Coefficient of determination, 1 - SS_res/SS_tot about the truth mean."""
    pred = np.asarray(pred, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if pred.size != truth.size or pred.size < 2:
        raise ValueError(f"r_squared needs equal lengths >= 2, got {pred.size} and {truth.size}")
    ss_tot = float(np.sum((truth - truth.mean()) ** 2))
    if ss_tot == 0.0:
        raise ValueError("r_squared is undefined for constant truth")
    ss_res = float(np.sum((pred - truth) ** 2))
    return 1.0 - ss_res / ss_tot


def estimate_shear(wrench: Wrench, contact_height: float) -> tuple[float, float]:
    """In-plane force estimate from the moments and the contact moment arm.

    Convention: a +x surface force applied contact_height above the plate
    produces +my, and a +y force produces -mx; hence fx = my/h, fy = -mx/h.
    """
    if not contact_height > 0:
        raise ValueError(f"contact_height must be > 0, got {contact_height!r}")
    return wrench.my / contact_height, -wrench.mx / contact_height


def _axis_metrics(pred: np.ndarray, truth: np.ndarray, condition: float) -> FitReport:
    residual = pred - truth
    rmse_axes = np.sqrt(np.mean(residual**2, axis=0))
    residual_max = np.max(np.abs(residual), axis=0)
    ss_tot = np.sum((truth - truth.mean(axis=0)) ** 2, axis=0)
    ss_res = np.sum(residual**2, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = np.where(ss_tot > 0, 1.0 - ss_res / ss_tot, np.nan)
    return FitReport(rmse_axes, r2, residual_max, float(condition))


def fit_calibration(
    counts,
    wrenches,
    baseline=None,
    cond_limit: float = 1e8,
) -> tuple[CalibrationMatrix, FitReport]:
    """Least-squares fit of the 3x3 calibration matrix.

    Solves k = W V^T (V V^T)^-1 over the tared count matrix V (3, n) and
    wrench matrix W (3, n); falls back to the pseudoinverse when the design
    conditioning exceeds cond_limit. The report is computed on the training
    rows.

    Raises:
        SingularFitError: when V has rank < 3, naming the dead directions.
    """
    counts = np.asarray(counts, dtype=float)
    wrenches = np.asarray(wrenches, dtype=float)
    if counts.ndim != 2 or counts.shape[1] != 3 or counts.shape != wrenches.shape:
        raise ValueError(
            f"expected matching (n, 3) arrays, got {counts.shape} and {wrenches.shape}"
        )
    n = counts.shape[0]
    if n < 9:
        raise ValueError(f"fitting needs at least 9 rows, got {n}")
    if baseline is None:
        baseline = np.zeros(3)
    baseline = np.asarray(baseline, dtype=float)

    v = (counts - baseline).T
    w = wrenches.T
    left, singulars, _ = np.linalg.svd(v, full_matrices=False)
    tol = max(singulars[0], 0.0) * 1e-10
    if singulars[0] == 0.0 or np.any(singulars <= tol):
        dead = [
            np.array2string(left[:, i], precision=4, suppress_small=True)
            for i in range(3)
            if singulars[i] <= tol
        ]
        raise SingularFitError(
            "tared counts are rank deficient; no variation along count direction(s) "
            + ", ".join(dead)
        )
    condition = float(singulars[0] / singulars[-1])
    if condition > cond_limit:
        k = w @ np.linalg.pinv(v)
    else:
        gram = v @ v.T
        k = np.linalg.solve(gram, v @ w.T).T
    matrix = CalibrationMatrix(k, baseline)
    report = _axis_metrics((k @ v).T, wrenches, condition)
    return matrix, report


def evaluate(matrix: CalibrationMatrix, counts, wrenches) -> FitReport:
    """Residual metrics of an existing calibration on a labelled log."""
    counts = np.asarray(counts, dtype=float)
    wrenches = np.asarray(wrenches, dtype=float)
    if counts.ndim != 2 or counts.shape != wrenches.shape or counts.shape[0] == 0:
        raise ValueError(
            f"expected matching nonempty (n, 3) arrays, got {counts.shape} and {wrenches.shape}"
        )
    pred = matrix.estimate(counts)
    condition = float(np.linalg.cond((counts - matrix.baseline).T))
    return _axis_metrics(pred, wrenches, condition)


class WrenchCalibrator(BaseEstimator, RegressorMixin):
    """Estimator wrapper around the linear calibration fit.

    fit expects X as raw counts (n, 3) and y as wrenches (n, 3); predict maps
    counts back to wrenches. The fitted map is exposed as matrix_ and the
    training metrics as report_.
    """

    def __init__(self, baseline=None, cond_limit: float = 1e8):
        self.baseline = baseline
        self.cond_limit = cond_limit

    def fit(self, X, y) -> "WrenchCalibrator":
        self.matrix_, self.report_ = fit_calibration(
            X, y, baseline=self.baseline, cond_limit=self.cond_limit
        )
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "matrix_"):
            raise NotFittedError("WrenchCalibrator must be fitted before predicting")
        return self.matrix_.estimate(X)
