"""Flat key = value configuration files.

All lengths are in meters, forces in N, moments in N*m; sensor angles are
given in degrees under sensor_angles_deg. Unknown keys are rejected so typos
fail loudly.
"""

from __future__ import annotations

import math

from .fusion import FusionConfig, Mode
from .physics import AdcModel, BeamSpec, StructureSpec

__all__ = ["load_config", "structure_from_config", "adc_from_config", "fusion_from_config"]

_KNOWN_KEYS = {
    "elastic_modulus",
    "beam_width",
    "beam_thickness",
    "beam_length",
    "sensor_radius",
    "sensor_angles_deg",
    "gap_initial",
    "gap_range",
    "adc_bits",
    "adc_noise_sigma",
    "adc_seed",
    "force_rate",
    "image_rate",
    "mode",
    "align_tolerance_ns",
    "queue_depth",
}


def load_config(path) -> dict[str, str]:
    """Parse `key = value` lines; '#' starts a comment, blank lines are fine."""
    values: dict[str, str] = {}
    with open(path) as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw.rstrip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in _KNOWN_KEYS:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = value
    return values


def structure_from_config(cfg: dict[str, str]) -> StructureSpec:
    beam = BeamSpec(
        elastic_modulus=float(cfg.get("elastic_modulus", 3.5e9)),
        width=float(cfg.get("beam_width", 5e-3)),
        thickness=float(cfg.get("beam_thickness", 2.5e-3)),
        length=float(cfg.get("beam_length", 8e-3)),
    )
    kwargs = {}
    if "sensor_angles_deg" in cfg:
        angles = tuple(math.radians(float(a)) for a in cfg["sensor_angles_deg"].split(","))
        kwargs["sensor_angles"] = angles
    return StructureSpec(
        beam=beam,
        sensor_radius=float(cfg.get("sensor_radius", 25e-3)),
        gap_initial=float(cfg.get("gap_initial", 50e-6)),
        gap_range=float(cfg.get("gap_range", 100e-6)),
        **kwargs,
    )


def adc_from_config(cfg: dict[str, str], seed: int | None = None) -> AdcModel:
    return AdcModel(
        bits=int(cfg.get("adc_bits", 10)),
        noise_sigma=float(cfg.get("adc_noise_sigma", 1.0)),
        rng_seed=int(cfg["adc_seed"]) if "adc_seed" in cfg and seed is None else (seed or 0),
    )


def fusion_from_config(
    cfg: dict[str, str],
    mode: str | None = None,
    force_rate: float | None = None,
    image_rate: float | None = None,
) -> FusionConfig:
    """Fusion settings from the config, with CLI overrides taking precedence."""
    tolerance = cfg.get("align_tolerance_ns")
    return FusionConfig(
        mode=Mode.parse(mode or cfg.get("mode", "Combined")),
        force_rate=float(force_rate if force_rate is not None else cfg.get("force_rate", 1000.0)),
        image_rate=float(image_rate if image_rate is not None else cfg.get("image_rate", 30.0)),
        align_tolerance_ns=int(tolerance) if tolerance is not None else None,
        queue_depth=int(cfg.get("queue_depth", 4)),
    )
