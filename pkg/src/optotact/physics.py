"""Forward model of the elastic sensing structure.

Maps an applied load (one normal force, two bending moments) through a
rigid-plate-on-three-cantilevers mechanics model to per-sensor reflector gaps
and on to quantized ADC counts, mirroring the signal chain of the real
optoelectronic force/torque unit.

Sign conventions used throughout:
  * positive deflection moves the reflector toward its sensor, so the gap
    shrinks under load;
  * counts grow linearly with gap (full scale at the open end of the sensing
    window), so pressing on the plate lowers the counts.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "InvalidSpecError",
    "SingularStructureError",
    "BeamSpec",
    "StructureSpec",
    "Wrench",
    "AdcModel",
    "SensorReading",
    "RangeReport",
    "beam_stiffness",
    "deflection_matrix",
    "wrench_to_deflections",
    "gap_from_deflection",
    "adc_from_gap",
    "simulate_reading",
    "simulate_counts",
    "check_deflection_range",
]


class InvalidSpecError(ValueError):
    """A structural parameter is outside its physical domain."""


class SingularStructureError(ValueError):
    """The sensor layout cannot resolve plate heave and both tilts."""


@dataclass(frozen=True)
class BeamSpec:
    """Rectangular-section cantilever loaded at its free end.

    elastic_modulus is in Pa, all lengths in m. thickness is the bending
    direction of the section and must not exceed width. Defaults describe the
    stock printed structure; every field is configuration.
    """

    elastic_modulus: float = 3.5e9
    width: float = 5e-3
    thickness: float = 2.5e-3
    length: float = 8e-3

    def __post_init__(self):
        for name in ("elastic_modulus", "width", "thickness", "length"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise InvalidSpecError(f"beam {name} must be finite and > 0, got {value!r}")
        if self.thickness > self.width:
            raise InvalidSpecError(
                f"beam thickness {self.thickness} exceeds width {self.width}"
            )


# Equiangular sensor layout, one sensor on the +y axis.
_DEFAULT_ANGLES = (math.pi / 2, 7 * math.pi / 6, 11 * math.pi / 6)


@dataclass(frozen=True)
class StructureSpec:
    """Plate-on-three-beams structure plus the optical sensing window.

    The three sensors sit at sensor_radius from the plate centre at
    sensor_angles (rad) and must not be collinear. The reflector rests
    gap_initial above each sensor; the usable optical window is
    [0, gap_range].
    """

    beam: BeamSpec = field(default_factory=BeamSpec)
    sensor_radius: float = 25e-3
    sensor_angles: tuple[float, float, float] = _DEFAULT_ANGLES
    gap_initial: float = 50e-6
    gap_range: float = 100e-6

    def __post_init__(self):
        if not (math.isfinite(self.sensor_radius) and self.sensor_radius > 0):
            raise InvalidSpecError(f"sensor_radius must be > 0, got {self.sensor_radius!r}")
        if len(self.sensor_angles) != 3:
            raise InvalidSpecError("exactly three sensor angles are required")
        if not all(math.isfinite(a) for a in self.sensor_angles):
            raise InvalidSpecError("sensor angles must be finite")
        if not (0 < self.gap_initial < self.gap_range):
            raise InvalidSpecError(
                f"need 0 < gap_initial < gap_range, got {self.gap_initial!r}, {self.gap_range!r}"
            )

    def sensor_positions(self) -> np.ndarray:
        """(3, 2) sensor x/y coordinates in the plate frame, m."""
        angles = np.asarray(self.sensor_angles, dtype=float)
        return self.sensor_radius * np.column_stack([np.cos(angles), np.sin(angles)])


@dataclass(frozen=True)
class Wrench:
    """Load triple: normal force fz (N) and bending moments mx, my (N*m)."""

    fz: float = 0.0
    mx: float = 0.0
    my: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.fz, self.mx, self.my)):
            raise ValueError(f"wrench components must be finite, got {self!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.fz, self.mx, self.my], dtype=float)

    @classmethod
    def from_array(cls, values) -> "Wrench":
        fz, mx, my = (float(v) for v in values)
        return cls(fz, mx, my)


@dataclass(frozen=True)
class AdcModel:
    """Quantizer model: bits of resolution plus Gaussian count noise."""

    bits: int = 10
    noise_sigma: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        if not 1 <= self.bits <= 16:
            raise InvalidSpecError(f"adc bits must be in [1, 16], got {self.bits!r}")
        if not (math.isfinite(self.noise_sigma) and self.noise_sigma >= 0):
            raise InvalidSpecError(f"noise_sigma must be >= 0, got {self.noise_sigma!r}")

    @property
    def full_scale(self) -> int:
        return (1 << self.bits) - 1

    def make_rng(self) -> np.random.Generator:
        """Fresh noise stream; create once per stream and reuse across calls."""
        return np.random.default_rng(self.rng_seed)


@dataclass(frozen=True)
class SensorReading:
    """Raw counts of the three channels at one instant (timestamp in ns)."""

    timestamp: int
    counts: tuple[int, int, int]


def beam_stiffness(beam: BeamSpec) -> float:
    """End-load stiffness 3*E*I/L^3 with I = w*t^3/12, N/m."""
    second_moment = beam.width * beam.thickness**3 / 12.0
    return 3.0 * beam.elastic_modulus * second_moment / beam.length**3


def deflection_matrix(spec: StructureSpec) -> np.ndarray:
    """(3, 3) linear map from (fz, mx, my) to per-sensor deflections, m.

    Solves the rigid-plate equilibrium on three identical springs: heave z0
    and small tilts (alpha about x, beta about y) follow from
    fz = k*sum(d_i), mx = k*sum(d_i*y_i), my = -k*sum(d_i*x_i) with
    d_i = z0 + alpha*y_i - beta*x_i.
    """
    positions = spec.sensor_positions()
    x, y = positions[:, 0], positions[:, 1]
    geometry = np.column_stack([np.ones(3), y, -x])
    gram = geometry.T @ geometry
    scale = max(1.0, spec.sensor_radius**2)
    if abs(np.linalg.det(gram)) < 1e-12 * scale**3:
        raise SingularStructureError(
            f"sensor layout at angles {spec.sensor_angles} is collinear"
        )
    stiffness = beam_stiffness(spec.beam)
    return geometry @ np.linalg.inv(gram) / stiffness


def wrench_to_deflections(wrench: Wrench, spec: StructureSpec) -> np.ndarray:
    """Per-sensor deflections (m); positive values close the gap."""
    return deflection_matrix(spec) @ wrench.as_array()


def gap_from_deflection(deflection: float, spec: StructureSpec) -> tuple[float, bool]:
    """Reflector gap for one sensor, clamped to the optical window.

    Returns (gap_m, saturated); saturated flags a clamp at either end of
    [0, gap_range].
    """
    gap = spec.gap_initial - deflection
    saturated = gap < 0.0 or gap > spec.gap_range
    return min(max(gap, 0.0), spec.gap_range), saturated


def _round_half_away(values: np.ndarray) -> np.ndarray:
    # np.round is round-half-even; the ADC rounds half away from zero.
    return np.copysign(np.floor(np.abs(values) + 0.5), values)


def adc_from_gap(
    gap: float,
    spec: StructureSpec,
    adc: AdcModel,
    rng: np.random.Generator | None = None,
) -> int:
    """Quantize one gap to a count in [0, 2^bits - 1].

    The characteristic is linear over the full window. Noise is drawn from
    rng when given, otherwise from a fresh stream seeded by the model; pass a
    shared generator when producing a time series.
    """
    if not 0.0 <= gap <= spec.gap_range:
        raise ValueError(f"gap {gap!r} outside the sensing window [0, {spec.gap_range}]")
    ideal = adc.full_scale * gap / spec.gap_range
    if adc.noise_sigma > 0.0:
        if rng is None:
            rng = adc.make_rng()
        ideal += rng.normal(0.0, adc.noise_sigma)
    count = _round_half_away(np.asarray(ideal))
    return int(np.clip(count, 0, adc.full_scale))


def simulate_reading(
    wrench: Wrench,
    spec: StructureSpec,
    adc: AdcModel,
    timestamp_ns: int = 0,
    rng: np.random.Generator | None = None,
) -> SensorReading:
    """Full chain wrench -> deflections -> gaps -> counts for one instant."""
    if adc.noise_sigma > 0.0 and rng is None:
        rng = adc.make_rng()
    deflections = wrench_to_deflections(wrench, spec)
    counts = tuple(
        adc_from_gap(gap_from_deflection(d, spec)[0], spec, adc, rng) for d in deflections
    )
    return SensorReading(timestamp=int(timestamp_ns), counts=counts)


def simulate_counts(
    wrenches: np.ndarray,
    spec: StructureSpec,
    adc: AdcModel,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized chain for a whole load history.

    Args:
        wrenches: (n, 3) array of (fz, mx, my) rows.
        rng: shared noise stream; defaults to a fresh stream from the model.

    Returns:
        counts: (n, 3) int64 array.
        saturated: (n,) bool array, True where any channel clamped.
    """
    wrenches = np.asarray(wrenches, dtype=float)
    if wrenches.ndim != 2 or wrenches.shape[1] != 3:
        raise ValueError(f"expected (n, 3) wrench array, got shape {wrenches.shape}")
    deflections = wrenches @ deflection_matrix(spec).T
    gaps = spec.gap_initial - deflections
    saturated = ((gaps < 0.0) | (gaps > spec.gap_range)).any(axis=1)
    gaps = np.clip(gaps, 0.0, spec.gap_range)
    ideal = adc.full_scale * gaps / spec.gap_range
    if adc.noise_sigma > 0.0:
        if rng is None:
            rng = adc.make_rng()
        ideal = ideal + rng.normal(0.0, adc.noise_sigma, size=ideal.shape)
    counts = np.clip(_round_half_away(ideal), 0, adc.full_scale).astype(np.int64)
    return counts, saturated


@dataclass(frozen=True)
class RangeReport:
    """Worst-case deflection audit over the corners of a rated load box."""

    passed: bool
    worst_deflection: float
    limit: float
    corners: tuple[tuple[Wrench, float], ...]

    def summary(self) -> str:
        lines = [
            f"deflection range check: {'PASS' if self.passed else 'FAIL'} "
            f"(worst |d| = {self.worst_deflection:.3e} m, limit {self.limit:.3e} m)"
        ]
        for wrench, deflection in self.corners:
            lines.append(
                f"  fz={wrench.fz:+.3g} N  mx={wrench.mx:+.3g} N*m  "
                f"my={wrench.my:+.3g} N*m  ->  max |d| = {deflection:.3e} m"
            )
        return "\n".join(lines)


def check_deflection_range(bounds: Wrench, spec: StructureSpec) -> RangeReport:
    """Analytic range audit replacing a numerical structure analysis.

    Evaluates the worst per-sensor deflection over the 8 corner loads of the
    box [-|fz|, +|fz|] x [-|mx|, +|mx|] x [-|my|, +|my|]. Passes iff the worst
    magnitude stays within gap_initial, which keeps every gap inside
    [0, gap_range].
    """
    matrix = deflection_matrix(spec)
    magnitudes = np.abs(np.array([bounds.fz, bounds.mx, bounds.my]))
    corners = []
    worst = 0.0
    for signs in itertools.product((-1.0, 1.0), repeat=3):
        load = magnitudes * np.asarray(signs)
        peak = float(np.max(np.abs(matrix @ load)))
        corners.append((Wrench.from_array(load), peak))
        worst = max(worst, peak)
    return RangeReport(
        passed=worst <= spec.gap_initial,
        worst_deflection=worst,
        limit=spec.gap_initial,
        corners=tuple(corners),
    )
