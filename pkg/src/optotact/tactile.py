"""Synthetic tactile imaging: shape stamps, three-light shading, datasets.

A contact is modelled as an indentation height map (depths in m, positive
into the pad) stamped onto a pixel grid and smoothed to stand in for pad
compliance. Rendering is Lambertian under three directional lights, one per
colour channel, which is what the real pad's radial LED groups approximate.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

__all__ = [
    "SHAPE_CLASSES",
    "OutOfFrameError",
    "HeightMap",
    "LightRig",
    "TactileImage",
    "StampPose",
    "Sample",
    "stamp_heightmap",
    "shade",
    "generate_dataset",
    "stratified_split",
    "split_dataset",
    "write_ppm",
    "read_ppm",
    "write_dataset",
    "load_dataset",
]

SHAPE_CLASSES = (
    "circle",
    "concentric_circle",
    "pentagon",
    "semi_circle",
    "square",
    "diamond",
    "heart",
    "moon",
    "trapezium",
    "triangle",
)

DEFAULT_GRID = (160, 120)  # (width, height) px
DEFAULT_CELL_SIZE = 1e-4  # m per px


class OutOfFrameError(ValueError):
    """The stamped shape does not fit inside the pixel grid."""


@dataclass(frozen=True)
class HeightMap:
    """Indentation grid; values in m, >= 0, shape (height, width)."""

    values: np.ndarray
    cell_size: float = DEFAULT_CELL_SIZE

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or min(values.shape) < 16:
            raise ValueError(f"height map must be at least 16x16, got shape {values.shape}")
        if not self.cell_size > 0:
            raise ValueError(f"cell_size must be > 0, got {self.cell_size!r}")
        if (values < 0).any():
            raise ValueError("indentation depths must be >= 0")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class LightRig:
    """Three directional lights, one per RGB channel.

    Azimuths are measured in the image plane (x right, y down), elevations
    above the plane in (0, pi/2), intensities in [0, 1]. Defaults place the
    channels 120 degrees apart.
    """

    azimuths: tuple[float, float, float] = (0.0, 2 * math.pi / 3, 4 * math.pi / 3)
    elevations: tuple[float, float, float] = (math.pi / 4,) * 3
    intensities: tuple[float, float, float] = (0.8, 0.8, 0.8)

    def __post_init__(self):
        if len(self.azimuths) != 3 or len(self.elevations) != 3 or len(self.intensities) != 3:
            raise ValueError("rig needs exactly three lights")
        if not all(0 < e < math.pi / 2 for e in self.elevations):
            raise ValueError("elevations must lie in (0, pi/2)")
        if not all(0 <= i <= 1 for i in self.intensities):
            raise ValueError("intensities must lie in [0, 1]")

    def directions(self) -> np.ndarray:
        """(3, 3) unit vectors pointing from the surface toward each light."""
        az = np.asarray(self.azimuths)
        el = np.asarray(self.elevations)
        return np.column_stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])


@dataclass(frozen=True)
class TactileImage:
    """RGB rendering in [0, 1], shape (height, width, 3), optional label."""

    pixels: np.ndarray
    label: str | None = None

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=float)
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise ValueError(f"expected (h, w, 3) pixels, got shape {pixels.shape}")
        object.__setattr__(self, "pixels", pixels)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class StampPose:
    """Placement of a shape: centre in px, rotation in rad, scale in px."""

    center: tuple[float, float]
    rotation: float = 0.0
    scale: float = 26.0


def _unit_indicator(shape: str, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Membership test in the shape's unit frame (v up, nominal size ~1)."""
    r2 = u * u + v * v
    if shape == "circle":
        return r2 <= 1.0
    if shape == "concentric_circle":
        # Ring wide enough that its crest stays flat after smoothing, so the
        # two boundary bands of the contact remain distinct at every scale.
        return (r2 <= 1.0) & (r2 >= 0.16)
    if shape == "pentagon":
        # Generous circumradius keeps the corners sharp relative to the
        # compliance blur; corner rounding is what drags polygon moment
        # invariants toward the circle's.
        apothem = 1.2 * math.cos(math.pi / 5)
        inside = np.ones_like(u, dtype=bool)
        for k in range(5):
            angle = math.radians(126 + 72 * k)
            inside &= u * math.cos(angle) + v * math.sin(angle) <= apothem
        return inside
    if shape == "semi_circle":
        return (r2 <= 1.3225) & (v >= 0.0)  # radius 1.15, flat side down
    if shape == "square":
        return (np.abs(u) <= 0.88) & (np.abs(v) <= 0.88)
    if shape == "diamond":
        return np.abs(u) / 0.72 + np.abs(v) / 1.15 <= 1.0
    if shape == "heart":
        x, y = u / 0.9, v / 0.9 - 0.15
        return (x * x + y * y - 1.0) ** 3 - x * x * y**3 <= 0.0
    if shape == "moon":
        cut = (u - 0.40) ** 2 + v * v
        return (r2 <= 1.0) & (cut >= 0.5184)  # cutter radius 0.72
    if shape == "trapezium":
        half_width = 0.95 - (v + 0.75) / 3.0
        return (np.abs(v) <= 0.75) & (np.abs(u) <= half_width)
    if shape == "triangle":
        inside = np.ones_like(u, dtype=bool)
        for k in range(3):
            angle = math.radians(30 + 120 * k)  # face normals, vertex up
            inside &= u * math.cos(angle) + v * math.sin(angle) <= 1.15 * 0.5
        return inside
    raise ValueError(f"unknown shape {shape!r}; expected one of {SHAPE_CLASSES}")


def stamp_heightmap(
    shape: str,
    pose: StampPose,
    depth: float,
    grid: tuple[int, int] = DEFAULT_GRID,
    smooth_radius: float = 2.0,
    cell_size: float = DEFAULT_CELL_SIZE,
) -> HeightMap:
    """Stamp one shape onto the grid as an indentation of the given depth.

    The indicator region is set to depth and blurred by a separable Gaussian
    of smooth_radius pixels to emulate pad compliance.

    Raises:
        OutOfFrameError: when the indicator is empty or touches the frame
            border (the shape must fit fully inside the grid).
    """
    if not depth > 0:
        raise ValueError(f"depth must be > 0, got {depth!r}")
    if not pose.scale > 0:
        raise ValueError(f"scale must be > 0, got {pose.scale!r}")
    width, height = grid
    cols, rows = np.meshgrid(np.arange(width, dtype=float), np.arange(height, dtype=float))
    # Shape frame: v points up, so image rows grow against it.
    dx = (cols - pose.center[0]) / pose.scale
    dy = (pose.center[1] - rows) / pose.scale
    cos_r, sin_r = math.cos(pose.rotation), math.sin(pose.rotation)
    u = cos_r * dx + sin_r * dy
    v = -sin_r * dx + cos_r * dy
    indicator = _unit_indicator(shape, u, v)
    if not indicator.any():
        raise OutOfFrameError(f"{shape} at {pose} lies outside the {grid} grid")
    border = np.zeros_like(indicator)
    border[0, :] = border[-1, :] = border[:, 0] = border[:, -1] = True
    if (indicator & border).any():
        raise OutOfFrameError(f"{shape} at {pose} is clipped by the {grid} frame")
    values = indicator.astype(float) * depth
    if smooth_radius > 0:
        values = ndimage.gaussian_filter(values, sigma=smooth_radius, mode="constant")
    return HeightMap(values, cell_size)


def shade(hm: HeightMap, rig: LightRig | None = None, ambient: float = 0.15) -> TactileImage:
    """Lambertian rendering of a height map under the three-light rig.

    The imprint is treated as a bump toward the camera, so the side of a
    contact facing a light picks up that channel. Channel value is
    ambient + intensity * max(0, n . l), clamped to [0, 1].
    """
    if rig is None:
        rig = LightRig()
    grad_y, grad_x = np.gradient(hm.values, hm.cell_size)
    normals = np.dstack([-grad_x, -grad_y, np.ones_like(hm.values)])
    normals /= np.linalg.norm(normals, axis=2, keepdims=True)
    directions = rig.directions()
    intensities = np.asarray(rig.intensities)
    lambert = np.maximum(np.einsum("hwc,lc->hwl", normals, directions), 0.0)
    pixels = np.clip(ambient + intensities * lambert, 0.0, 1.0)
    return TactileImage(pixels)


@dataclass(frozen=True)
class Sample:
    """One generated dataset element with its provenance."""

    image: TactileImage
    label: str
    pose: StampPose
    depth: float
    index: int


def generate_dataset(
    n_per_class: int,
    seed: int,
    grid: tuple[int, int] = DEFAULT_GRID,
    noise_sigma: float = 0.01,
    rig: LightRig | None = None,
) -> list[Sample]:
    """Balanced labelled set with randomized pose, depth and pixel noise.

    Every image draws from its own substream seeded by (seed, index), so the
    result is deterministic and independent of generation order.
    """
    if n_per_class < 1:
        raise ValueError(f"n_per_class must be >= 1, got {n_per_class}")
    width, height = grid
    base_scale = 0.25 * min(width, height)
    samples = []
    for class_index, shape in enumerate(SHAPE_CLASSES):
        for j in range(n_per_class):
            index = class_index * n_per_class + j
            rng = np.random.default_rng([seed, index])
            pose = StampPose(
                center=(
                    width / 2 + rng.uniform(-6.0, 6.0),
                    height / 2 + rng.uniform(-6.0, 6.0),
                ),
                rotation=rng.uniform(0.0, 2 * math.pi),
                scale=base_scale * rng.uniform(0.8, 1.2),
            )
            depth = rng.uniform(0.4e-3, 1.2e-3)
            hm = stamp_heightmap(shape, pose, depth, grid=grid)
            image = shade(hm, rig)
            pixels = image.pixels
            if noise_sigma > 0:
                pixels = np.clip(pixels + rng.normal(0.0, noise_sigma, pixels.shape), 0.0, 1.0)
            samples.append(Sample(TactileImage(pixels, label=shape), shape, pose, depth, index))
    return samples


def stratified_split(labels, ratio: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Index split, stratified by label, with a floor-consistent total.

    Each class contributes floor or ceil of ratio * class_count, allocated by
    largest remainder so the training total equals floor(ratio * n) exactly.
    """
    if not 0 < ratio < 1:
        raise ValueError(f"ratio must lie in (0, 1), got {ratio!r}")
    labels = np.asarray(labels)
    classes, counts = np.unique(labels, return_counts=True)
    if (counts < 2).any():
        thin = classes[counts < 2]
        raise ValueError(f"classes with fewer than 2 samples cannot be split: {list(thin)}")
    targets = ratio * counts
    take = np.floor(targets).astype(int)
    shortfall = int(math.floor(ratio * len(labels))) - int(take.sum())
    order = np.argsort(-(targets - take), kind="stable")
    for i in order[:shortfall]:
        take[i] += 1
    # Keep both sides of every class nonempty.
    take = np.clip(take, 1, counts - 1)

    rng = np.random.default_rng(seed)
    train_parts, val_parts = [], []
    for cls, n_train in zip(classes, take):
        idx = np.flatnonzero(labels == cls)
        perm = rng.permutation(idx)
        train_parts.append(perm[:n_train])
        val_parts.append(perm[n_train:])
    return np.sort(np.concatenate(train_parts)), np.sort(np.concatenate(val_parts))


def split_dataset(samples: list[Sample], ratio: float, seed: int):
    """Stratified shuffle split of generated samples."""
    labels = [s.label for s in samples]
    train_idx, val_idx = stratified_split(labels, ratio, seed)
    return [samples[i] for i in train_idx], [samples[i] for i in val_idx]


def write_ppm(path, image: TactileImage) -> None:
    """Binary 8-bit PPM (P6)."""
    data = np.clip(np.rint(image.pixels * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as handle:
        handle.write(f"P6\n{image.width} {image.height}\n255\n".encode("ascii"))
        handle.write(data.tobytes())


def read_ppm(path, label: str | None = None) -> TactileImage:
    with open(path, "rb") as handle:
        blob = handle.read()
    if not blob.startswith(b"P6"):
        raise ValueError(f"{path} is not a binary PPM (P6) file")
    fields: list[int] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        fields.append(int(blob[start:pos]))
    pos += 1  # single whitespace after maxval
    width, height, maxval = fields
    data = np.frombuffer(blob, dtype=np.uint8, count=width * height * 3, offset=pos)
    pixels = data.reshape(height, width, 3).astype(float) / maxval
    return TactileImage(pixels, label=label)


def write_dataset(directory, samples: list[Sample]) -> Path:
    """PPM files plus a manifest CSV; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = directory / "manifest.csv"
    with open(manifest, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["path", "label", "seed", "center_x", "center_y", "rotation", "scale", "depth"]
        )
        for sample in samples:
            name = f"{sample.label}_{sample.index:05d}.ppm"
            write_ppm(directory / name, sample.image)
            writer.writerow(
                [
                    name,
                    sample.label,
                    sample.index,
                    f"{sample.pose.center[0]:.17g}",
                    f"{sample.pose.center[1]:.17g}",
                    f"{sample.pose.rotation:.17g}",
                    f"{sample.pose.scale:.17g}",
                    f"{sample.depth:.17g}",
                ]
            )
    return manifest


def load_dataset(directory) -> list[TactileImage]:
    """Images listed in a dataset manifest, labels attached."""
    directory = Path(directory)
    manifest = directory / "manifest.csv"
    if not manifest.exists():
        raise FileNotFoundError(f"no manifest.csv under {directory}")
    images = []
    with open(manifest, newline="") as handle:
        for row in csv.DictReader(handle):
            images.append(read_ppm(directory / row["path"], label=row["label"]))
    return images
