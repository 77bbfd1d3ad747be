import math

import numpy as np
import pytest

from optotact.features import (
    contact_weights,
    FEATURE_NAMES,
    EmptyContactError,
    contact_mask,
    extract_features,
    hu_moments,
)
from optotact.tactile import LightRig, StampPose, TactileImage, shade, stamp_heightmap

GRID = (160, 120)


def render(shape, center=(80.0, 60.0), rotation=0.0, scale=26.0, depth=1e-3):
    pose = StampPose(center=center, rotation=rotation, scale=scale)
    return shade(stamp_heightmap(shape, pose, depth, grid=GRID))


class TestHuMoments:
    def test_against_opencv(self):
        cv2 = pytest.importorskip("cv2")
        rng = np.random.default_rng(0)
        for _ in range(5):
            mask = np.zeros((60, 80))
            r0, c0 = rng.integers(10, 30, size=2)
            mask[r0 : r0 + rng.integers(8, 25), c0 : c0 + rng.integers(8, 25)] = 1.0
            mine = hu_moments(mask)
            theirs = cv2.HuMoments(cv2.moments(mask.astype(np.float32))).ravel()
            assert mine == pytest.approx(theirs, rel=1e-5, abs=1e-12)

    def test_translation_exact(self):
        mask = np.zeros((50, 50))
        mask[10:20, 12:25] = 1.0
        shifted = np.roll(np.roll(mask, 7, axis=0), -4, axis=1)
        assert hu_moments(mask) == pytest.approx(hu_moments(shifted), rel=1e-12, abs=1e-18)

    def test_empty_region_rejected(self):
        with pytest.raises(EmptyContactError):
            hu_moments(np.zeros((20, 20)))


class TestContactMask:
    def test_band_surrounds_the_contact(self):
        image = render("circle")
        mask = contact_mask(image)
        assert mask.any()
        # Interior of the contact shades like the background: no deviation.
        assert not mask[60, 80]

    def test_blank_image_empty(self):
        blank = shade(stamp_heightmap("circle", StampPose((80, 60), 0, 26), 1e-3, grid=GRID))
        flat = TactileImage(np.full_like(blank.pixels, blank.pixels[0, 0, :]))
        assert not contact_mask(flat).any()

    def test_speckle_noise_pruned(self):
        image = render("circle")
        pixels = image.pixels.copy()
        pixels[5, 5] = 1.0  # single hot pixel
        mask = contact_mask(pixels)
        assert not mask[5, 5]


class TestExtractFeatures:
    def test_vector_shape_and_names(self):
        vec = extract_features(render("square"))
        assert vec.shape == (10,)
        assert len(FEATURE_NAMES) == 10
        assert np.isfinite(vec).all()

    def test_translation_invariance(self):
        # An integer-pixel shift reproduces the identical sampled mask, so the
        # invariants agree far inside 1e-6 relative.
        base = hu_moments(contact_weights(render("circle", center=(75.0, 58.0)))[0])
        moved = hu_moments(contact_weights(render("circle", center=(85.0, 58.0)))[0])
        assert moved == pytest.approx(base, rel=1e-6, abs=1e-20)

    def test_rotated_square_invariance(self):
        # Pixelation bounds the drift: 1e-3 relative on the invariants, with
        # an absolute floor where four-fold symmetry sends them to zero.
        base = hu_moments(contact_weights(render("square"))[0])
        rotated = hu_moments(contact_weights(render("square", rotation=math.pi / 4))[0])
        assert rotated == pytest.approx(base, rel=1e-3, abs=1e-6)

    def test_blank_image_raises(self):
        flat = TactileImage(np.full((120, 160, 3), 0.7))
        with pytest.raises(EmptyContactError):
            extract_features(flat)

    def test_area_in_unit_range(self):
        vec = extract_features(render("heart"))
        assert 0.0 < vec[7] < 1.0

    def test_topology_separates_ring_contacts(self):
        disk = extract_features(render("circle"))
        ring = extract_features(render("concentric_circle"))
        assert disk[9] == 1.0
        assert ring[9] == 2.0

    def test_eccentricity_orders_shapes(self):
        round_ecc = extract_features(render("circle"))[8]
        long_ecc = extract_features(render("moon"))[8]
        assert round_ecc < 0.3 < long_ecc
