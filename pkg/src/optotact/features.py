"""Pose-invariant contact descriptors extracted from tactile images.

A contact reveals itself where the shading deviates from the flat-field
level. Because only sloped pixels shade differently, that deviation mask is a
band along the contact boundary; moments and area are therefore computed on
the hole-filled footprint, while the band itself carries the topology (one
band per closed contour).
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .tactile import TactileImage

__all__ = [
    "EmptyContactError",
    "FEATURE_NAMES",
    "contact_mask",
    "contact_weights",
    "hu_moments",
    "extract_features",
    "extract_feature_matrix",
]

FEATURE_NAMES = (
    "log_hu1",
    "log_hu2",
    "log_hu3",
    "log_hu4",
    "log_hu5",
    "log_hu6",
    "log_hu7",
    "contact_area",
    "eccentricity",
    "region_topology",
)

DEFAULT_THRESHOLD = 0.05
MIN_COMPONENT_PX = 4


class EmptyContactError(ValueError):
    """No pixel deviates from the flat-field level above the threshold."""


def _deviation(pixels: np.ndarray) -> np.ndarray:
    # The flat-field level is estimated per channel as the image median;
    # background dominates every frame, so the median is the rest shade.
    flat = np.median(pixels.reshape(-1, 3), axis=0)
    return np.max(np.abs(pixels - flat), axis=2)


def contact_mask(
    image: TactileImage | np.ndarray,
    threshold: float = DEFAULT_THRESHOLD,
    min_component: int = MIN_COMPONENT_PX,
) -> np.ndarray:
    """Boolean mask of pixels whose shading deviates beyond the threshold.

    Connected components smaller than min_component pixels are dropped; they
    are noise, not contact.
    """
    pixels = image.pixels if isinstance(image, TactileImage) else np.asarray(image, dtype=float)
    mask = _deviation(pixels) > threshold
    if min_component > 1 and mask.any():
        labels, n = ndimage.label(mask)
        sizes = np.bincount(labels.ravel())
        small = np.flatnonzero(sizes < min_component)
        if small.size:
            mask &= ~np.isin(labels, small[small > 0])
    return mask


def _weighted_moments(weights: np.ndarray) -> dict[tuple[int, int], float]:
    """Central moments mu_pq up to order 3 (p over x = columns, q over y = rows)."""
    rows, cols = weights.shape
    xs = np.arange(cols, dtype=float)
    ys = np.arange(rows, dtype=float)
    m00 = float(weights.sum())
    cx = float((weights.sum(axis=0) @ xs) / m00)
    cy = float((weights.sum(axis=1) @ ys) / m00)
    x_pow = [np.ones(cols), xs - cx, (xs - cx) ** 2, (xs - cx) ** 3]
    y_pow = [np.ones(rows), ys - cy, (ys - cy) ** 2, (ys - cy) ** 3]
    mu = {}
    for p in range(4):
        for q in range(4 - p):
            mu[(p, q)] = float(np.einsum("yx,y,x->", weights, y_pow[q], x_pow[p]))
    return mu


def hu_moments(weights: np.ndarray) -> np.ndarray:
    """The seven rotation/translation/scale invariant moments of a region.

    Accepts a boolean mask or a nonnegative weight image (fractional edge
    membership keeps the invariants stable against pixelation).
    """
    weights = np.asarray(weights, dtype=float)
    if weights.sum() <= 0:
        raise EmptyContactError("cannot compute moments of an empty region")
    mu = _weighted_moments(weights)
    m00 = mu[(0, 0)]

    def eta(p: int, q: int) -> float:
        return mu[(p, q)] / m00 ** (1 + (p + q) / 2)

    n20, n02, n11 = eta(2, 0), eta(0, 2), eta(1, 1)
    n30, n03, n21, n12 = eta(3, 0), eta(0, 3), eta(2, 1), eta(1, 2)
    a = n30 + n12
    b = n21 + n03
    c = n30 - 3 * n12
    d = 3 * n21 - n03
    return np.array(
        [
            n20 + n02,
            (n20 - n02) ** 2 + 4 * n11**2,
            c**2 + d**2,
            a**2 + b**2,
            c * a * (a**2 - 3 * b**2) + d * b * (3 * a**2 - b**2),
            (n20 - n02) * (a**2 - b**2) + 4 * n11 * a * b,
            d * a * (a**2 - 3 * b**2) - c * b * (3 * a**2 - b**2),
        ]
    )


def _signed_log(values: np.ndarray) -> np.ndarray:
    # Tames the huge dynamic range of the invariants.
    return np.sign(values) * np.log10(np.abs(values) + 1e-30)


def contact_weights(
    image: TactileImage | np.ndarray,
    threshold: float = DEFAULT_THRESHOLD,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(weights, mask, filled) describing the contact footprint.

    weights is the hole-filled footprint with fractional membership across
    the band edge, confined to the mask's immediate neighbourhood so
    background noise cannot contribute mass.

    Raises:
        EmptyContactError: blank image, nothing above the threshold.
    """
    pixels = image.pixels if isinstance(image, TactileImage) else np.asarray(image, dtype=float)
    deviation = _deviation(pixels)
    mask = contact_mask(pixels, threshold=threshold)
    if not mask.any():
        raise EmptyContactError(f"no contact found above deviation threshold {threshold}")
    filled = ndimage.binary_fill_holes(mask)
    soft = np.clip((deviation - 0.5 * threshold) / threshold, 0.0, 1.0)
    fringe = ndimage.binary_dilation(mask, iterations=2)
    weights = np.where(filled, 1.0, np.where(fringe, soft, 0.0))
    return weights, mask, filled


def extract_features(
    image: TactileImage | np.ndarray,
    threshold: float = DEFAULT_THRESHOLD,
) -> np.ndarray:
    """10 descriptors of the contact in an image.

    Seven signed-log Hu moments and the normalized area and eccentricity of
    the filled contact footprint, plus a topology count: deviation-band
    components minus holes remaining in the footprint (a plain disk scores 1,
    a ring contact 2).

    Raises:
        EmptyContactError: blank image, nothing above the threshold.
    """
    weights, mask, filled = contact_weights(image, threshold=threshold)
    hu = hu_moments(weights)
    mu = _weighted_moments(weights)
    area = float(weights.sum()) / weights.size
    cov = np.array([[mu[(2, 0)], mu[(1, 1)]], [mu[(1, 1)], mu[(0, 2)]]]) / mu[(0, 0)]
    lam_max, lam_min = np.sort(np.linalg.eigvalsh(cov))[::-1]
    eccentricity = float(np.sqrt(max(0.0, 1.0 - lam_min / lam_max))) if lam_max > 0 else 0.0

    n_bands = ndimage.label(mask)[1]
    inv_labels, inv_n = ndimage.label(~filled)
    edge_labels = np.unique(
        np.concatenate([inv_labels[0, :], inv_labels[-1, :], inv_labels[:, 0], inv_labels[:, -1]])
    )
    n_holes = inv_n - np.count_nonzero(edge_labels)
    topology = float(n_bands - n_holes)

    return np.concatenate([_signed_log(hu), [area, eccentricity, topology]])


def extract_feature_matrix(images, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """(n, 10) feature matrix for a sequence of images."""
    return np.array([extract_features(img, threshold=threshold) for img in images])
