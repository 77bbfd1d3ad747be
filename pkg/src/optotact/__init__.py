"""Toolkit for a dual-mode tactile + force/torque sensing unit, in software.

Simulates the optoelectronic multi-axis force/torque chain, fits and scores
its linear calibration, renders synthetic tactile images for shape
classification, and fuses the fast force channel with the slow texture
channel.
"""

from .calibration import (
    CalibrationLog,
    CalibrationMatrix,
    FitReport,
    WrenchCalibrator,
    factory_matrix,
    fit_calibration,
    r_squared,
    rmse,
    tare,
)
from .classifier import SoftmaxShapeClassifier, classify_image, gradient_check, train_on_images
from .features import extract_features
from .fusion import FusionConfig, Mode, Scenario, align, backpressure_test, run_pipeline
from .physics import (
    AdcModel,
    BeamSpec,
    SensorReading,
    StructureSpec,
    Wrench,
    beam_stiffness,
    check_deflection_range,
    simulate_reading,
    wrench_to_deflections,
)
from .tactile import (
    SHAPE_CLASSES,
    HeightMap,
    LightRig,
    TactileImage,
    generate_dataset,
    shade,
    split_dataset,
    stamp_heightmap,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "AdcModel",
    "BeamSpec",
    "CalibrationLog",
    "CalibrationMatrix",
    "FitReport",
    "FusionConfig",
    "HeightMap",
    "LightRig",
    "Mode",
    "SHAPE_CLASSES",
    "Scenario",
    "SensorReading",
    "SoftmaxShapeClassifier",
    "StructureSpec",
    "TactileImage",
    "Wrench",
    "WrenchCalibrator",
    "align",
    "backpressure_test",
    "beam_stiffness",
    "check_deflection_range",
    "classify_image",
    "extract_features",
    "factory_matrix",
    "fit_calibration",
    "generate_dataset",
    "gradient_check",
    "r_squared",
    "rmse",
    "run_pipeline",
    "shade",
    "simulate_reading",
    "split_dataset",
    "stamp_heightmap",
    "tare",
    "train_on_images",
    "wrench_to_deflections",
]
