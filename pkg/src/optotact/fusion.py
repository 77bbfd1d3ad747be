"""Dual-rate sensing pipeline: fast force channel, slow texture channel.

Runs on a scripted simulated clock so results are deterministic. The design
contract is that the force channel's cadence never depends on image-side
load; the image side absorbs overload through a small drop-oldest queue.
"""

from __future__ import annotations

import csv
import enum
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import calibration, physics, tactile
from .physics import AdcModel, SensorReading, StructureSpec, Wrench
from .tactile import LightRig, StampPose, TactileImage

__all__ = [
    "Mode",
    "FusionConfig",
    "ForceFrame",
    "ImageFrame",
    "FusedRecord",
    "ScenarioStep",
    "Scenario",
    "PipelineStats",
    "PipelineResult",
    "BackpressureStats",
    "align",
    "run_pipeline",
    "backpressure_test",
    "load_scenario",
]


class Mode(enum.Enum):
    FORCE_ONLY = "ForceOnly"
    TEXTURE_ONLY = "TextureOnly"
    COMBINED = "Combined"

    @classmethod
    def parse(cls, text: str) -> "Mode":
        for mode in cls:
            if mode.value.lower() == str(text).lower():
                return mode
        valid = ", ".join(m.value for m in cls)
        raise ValueError(f"unknown mode {text!r}; valid modes: {valid}")


@dataclass(frozen=True)
class FusionConfig:
    mode: Mode = Mode.COMBINED
    force_rate: float = 1000.0
    image_rate: float = 30.0
    align_tolerance_ns: int | None = None  # default: half the force period
    queue_depth: int = 4

    def __post_init__(self):
        if not (self.force_rate > 0 and self.image_rate > 0):
            raise ValueError("rates must be > 0")
        if self.align_tolerance_ns is not None and self.align_tolerance_ns < 0:
            raise ValueError("align tolerance must be >= 0")
        if self.queue_depth < 1:
            raise ValueError("queue depth must be >= 1")

    def tolerance_ns(self) -> int:
        if self.align_tolerance_ns is not None:
            return int(self.align_tolerance_ns)
        return round(0.5e9 / self.force_rate)


@dataclass(frozen=True)
class ForceFrame:
    timestamp: int
    reading: SensorReading
    wrench: Wrench  # estimated through the calibration


@dataclass(frozen=True)
class ImageFrame:
    timestamp: int
    image: TactileImage
    label: str | None = None


@dataclass(frozen=True)
class FusedRecord:
    image: ImageFrame
    force: ForceFrame
    delta_ns: int  # image timestamp minus force timestamp


@dataclass(frozen=True)
class ScenarioStep:
    """Piecewise-constant segment of the scripted timeline."""

    start_s: float
    wrench: Wrench = field(default_factory=Wrench)
    shape: str | None = None
    depth: float = 0.8e-3


_REST = ScenarioStep(start_s=float("-inf"))


@dataclass(frozen=True)
class Scenario:
    steps: tuple[ScenarioStep, ...]

    def __post_init__(self):
        steps = tuple(sorted(self.steps, key=lambda s: s.start_s))
        object.__setattr__(self, "steps", steps)

    @classmethod
    def constant(cls, wrench: Wrench, shape: str | None = None, depth: float = 0.8e-3):
        return cls((ScenarioStep(0.0, wrench, shape, depth),))

    def step_at(self, t_s: float) -> ScenarioStep:
        active = _REST
        for step in self.steps:
            if step.start_s <= t_s:
                active = step
            else:
                break
        return active


def load_scenario(path) -> Scenario:
    """CSV with header t_s,fz,mx,my,shape,depth; empty shape means no contact."""
    steps = []
    with open(path, newline="") as handle:
        for row in csv.DictReader(handle):
            shape = (row.get("shape") or "").strip() or None
            depth = float(row["depth"]) if (row.get("depth") or "").strip() else 0.8e-3
            steps.append(
                ScenarioStep(
                    start_s=float(row["t_s"]),
                    wrench=Wrench(float(row["fz"]), float(row["mx"]), float(row["my"])),
                    shape=shape,
                    depth=depth,
                )
            )
    if not steps:
        raise ValueError(f"scenario {path} has no rows")
    return Scenario(tuple(steps))


@dataclass(frozen=True)
class PipelineStats:
    force_frames: int
    image_frames: int
    fused_records: int
    unmatched_images: int
    force_dropped: int
    image_dropped: int
    force_jitter_ns: int
    image_jitter_ns: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class PipelineResult:
    force_log: list[ForceFrame]
    image_log: list[ImageFrame]
    fused: list[FusedRecord]
    stats: PipelineStats


def _frame_times_ns(rate: float, duration_s: float) -> np.ndarray:
    n = round(rate * duration_s)
    return np.round(np.arange(n) * (1e9 / rate)).astype(np.int64)


def _max_jitter_ns(times: np.ndarray, rate: float) -> int:
    if len(times) < 2:
        return 0
    nominal = 1e9 / rate
    return int(np.max(np.abs(np.diff(times) - nominal)))


def align(force_log, image_log, tolerance_ns: int) -> list[FusedRecord]:
    """Pair every image with its temporally nearest force frame.

    Single forward pass over both timestamp-sorted logs; images whose nearest
    force frame is farther than tolerance_ns are skipped (callers count them
    as image count minus fused count).

    Raises:
        ValueError: either log is not sorted by timestamp.
    """
    force_times = [f.timestamp for f in force_log]
    image_times = [f.timestamp for f in image_log]
    if any(a > b for a, b in zip(force_times, force_times[1:])):
        raise ValueError("force log is not timestamp-sorted")
    if any(a > b for a, b in zip(image_times, image_times[1:])):
        raise ValueError("image log is not timestamp-sorted")
    if not force_log:
        return []
    fused = []
    j = 0
    for frame in image_log:
        while j + 1 < len(force_times) and abs(force_times[j + 1] - frame.timestamp) <= abs(
            force_times[j] - frame.timestamp
        ):
            j += 1
        delta = frame.timestamp - force_times[j]
        if abs(delta) <= tolerance_ns:
            fused.append(FusedRecord(frame, force_log[j], int(delta)))
    return fused


def run_pipeline(
    config: FusionConfig,
    scenario: Scenario,
    duration_s: float,
    structure: StructureSpec | None = None,
    adc: AdcModel | None = None,
    cal: calibration.CalibrationMatrix | None = None,
    grid: tuple[int, int] = tactile.DEFAULT_GRID,
    rig: LightRig | None = None,
) -> PipelineResult:
    """Sample the scenario on both channels and optionally fuse them.

    The force channel runs the full physics + calibration chain at
    force_rate; the image channel renders the active contact at image_rate.
    With no calibration given, the analytic one for the simulated structure
    is used.
    """
    if not duration_s > 0:
        raise ValueError(f"duration must be > 0, got {duration_s!r}")
    structure = structure or StructureSpec()
    adc = adc or AdcModel()
    cal = cal or calibration.ideal_matrix(structure, adc)

    force_log: list[ForceFrame] = []
    image_log: list[ImageFrame] = []
    force_on = config.mode in (Mode.FORCE_ONLY, Mode.COMBINED)
    image_on = config.mode in (Mode.TEXTURE_ONLY, Mode.COMBINED)

    force_times = _frame_times_ns(config.force_rate, duration_s) if force_on else np.array([], np.int64)
    if force_on:
        rng = adc.make_rng()
        wrenches = np.array(
            [scenario.step_at(t / 1e9).wrench.as_array() for t in force_times]
        ).reshape(-1, 3)
        counts, _ = physics.simulate_counts(wrenches, structure, adc, rng)
        estimates = cal.estimate(counts)
        for t, v, w in zip(force_times, counts, estimates):
            reading = SensorReading(int(t), (int(v[0]), int(v[1]), int(v[2])))
            force_log.append(ForceFrame(int(t), reading, Wrench.from_array(w)))

    image_times = _frame_times_ns(config.image_rate, duration_s) if image_on else np.array([], np.int64)
    if image_on:
        width, height = grid
        pose = StampPose(center=(width / 2, height / 2), rotation=0.0, scale=0.22 * min(grid))
        rendered: dict[tuple, TactileImage] = {}
        for t in image_times:
            step = scenario.step_at(t / 1e9)
            key = (step.shape, step.depth)
            if key not in rendered:
                if step.shape is None:
                    blank = tactile.HeightMap(np.zeros((height, width)))
                    rendered[key] = shade_img = tactile.shade(blank, rig)
                else:
                    hm = tactile.stamp_heightmap(step.shape, pose, step.depth, grid=grid)
                    rendered[key] = tactile.shade(hm, rig)
            image_log.append(ImageFrame(int(t), rendered[key], label=step.shape))

    fused = (
        align(force_log, image_log, config.tolerance_ns())
        if config.mode is Mode.COMBINED
        else []
    )
    stats = PipelineStats(
        force_frames=len(force_log),
        image_frames=len(image_log),
        fused_records=len(fused),
        unmatched_images=(len(image_log) - len(fused)) if config.mode is Mode.COMBINED else 0,
        force_dropped=0,
        image_dropped=0,
        force_jitter_ns=_max_jitter_ns(force_times, config.force_rate),
        image_jitter_ns=_max_jitter_ns(image_times, config.image_rate),
    )
    return PipelineResult(force_log, image_log, fused, stats)


@dataclass(frozen=True)
class BackpressureStats:
    force_frames: int
    force_dropped: int
    image_arrivals: int
    image_processed: int
    image_dropped: int
    max_queue_depth: int


def backpressure_test(
    config: FusionConfig,
    slow_image_cost_s: float,
    duration_s: float = 1.0,
) -> BackpressureStats:
    """Simulate a slow image consumer and audit both channels.

    Image frames arrive at image_rate and each costs slow_image_cost_s to
    process; overload spills into a bounded drop-oldest queue. The force
    channel is produced on its own cadence and is never throttled, which is
    the whole point of splitting the two.

    Raises:
        ValueError: slow_image_cost_s is negative or above 10x the image period.
    """
    period = 1.0 / config.image_rate
    if not 0.0 <= slow_image_cost_s <= 10.0 * period:
        raise ValueError(
            f"slow_image_cost_s must lie in [0, {10 * period:.4g}], got {slow_image_cost_s!r}"
        )
    arrivals = _frame_times_ns(config.image_rate, duration_s) / 1e9
    queue: deque[float] = deque()
    server_free = 0.0
    processed = dropped = 0
    max_depth = 0
    for t in arrivals:
        while queue and server_free <= t:
            start = max(server_free, queue[0])
            if start > t:
                break
            queue.popleft()
            server_free = start + slow_image_cost_s
            processed += 1
        if len(queue) >= config.queue_depth:
            queue.popleft()
            dropped += 1
        queue.append(float(t))
        max_depth = max(max_depth, len(queue))
    processed += len(queue)  # drains after the run; queued frames are late, not lost
    force_frames = round(config.force_rate * duration_s) if config.mode is not Mode.TEXTURE_ONLY else 0
    return BackpressureStats(
        force_frames=force_frames,
        force_dropped=0,
        image_arrivals=len(arrivals),
        image_processed=processed,
        image_dropped=dropped,
        max_queue_depth=max_depth,
    )


def save_fused_csv(path, fused: list[FusedRecord]) -> None:
    """Fused log columns: t_image_ns,t_force_ns,delta_ns,fz,mx,my,label."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["t_image_ns", "t_force_ns", "delta_ns", "fz", "mx", "my", "label"])
        for record in fused:
            wrench = record.force.wrench
            writer.writerow(
                [
                    record.image.timestamp,
                    record.force.timestamp,
                    record.delta_ns,
                    f"{wrench.fz:.17g}",
                    f"{wrench.mx:.17g}",
                    f"{wrench.my:.17g}",
                    record.image.label or "",
                ]
            )
