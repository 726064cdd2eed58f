"""Detection-quality metric tests."""

import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from polarndt.evaluation import (
    CNR_CAP,
    EmptyRegionError,
    boundary_mask,
    cnr,
    edge_sharpness,
    region_stats,
    separability,
)


def two_level_mask(shape=(16, 16)):
    mask = np.zeros(shape, dtype=np.int64)
    mask[4:12, 4:12] = 1
    return mask


class TestCnr:
    def test_indicator_map_hits_cap(self):
        mask = two_level_mask()
        assert cnr(mask.astype(float), mask, 1) == CNR_CAP

    def test_pure_noise_is_low(self):
        mask = two_level_mask((32, 32))
        for seed in range(50):
            rng = np.random.default_rng(seed)
            noise = rng.normal(0, 1, mask.shape)
            assert cnr(noise, mask, 1) < 0.5

    def test_closed_form_two_level_fixture(self):
        # label values alternate m1 +/- s1 exactly; background m0 +/- s0
        mask = np.zeros((4, 8), dtype=np.int64)
        mask[:, 4:] = 1
        m0, s0, m1, s1 = 1.0, 0.2, 3.0, 0.4
        img = np.empty((4, 8))
        img[:, :4] = m0
        img[::2, :4] += s0
        img[1::2, :4] -= s0
        img[:, 4:] = m1
        img[::2, 4:] += s1
        img[1::2, 4:] -= s1
        expected = abs(m1 - m0) / np.sqrt((s1 ** 2 + s0 ** 2) / 2)
        assert cnr(img, mask, 1) == pytest.approx(expected, rel=1e-12)

    def test_affine_invariance(self):
        mask = two_level_mask()
        rng = np.random.default_rng(3)
        img = rng.normal(0, 1, mask.shape) + 2.0 * mask
        base = cnr(img, mask, 1)
        assert cnr(3.7 * img - 11.0, mask, 1) == pytest.approx(base, abs=1e-9)
        assert cnr(-2.0 * img + 5.0, mask, 1) == pytest.approx(base, abs=1e-9)

    def test_monotone_degradation_with_noise(self):
        mask = two_level_mask((64, 64))
        base = 2.0 * mask.astype(float)
        rng = np.random.default_rng(11)
        unit_noise = rng.normal(0, 1, mask.shape)
        values = [cnr(base + s * unit_noise, mask, 1)
                  for s in (0.1, 0.2, 0.5, 1.0, 2.0)]
        assert all(b <= a for a, b in zip(values, values[1:]))

    def test_equal_constant_regions_zero(self):
        mask = two_level_mask()
        assert cnr(np.full(mask.shape, 2.5), mask, 1) == 0.0

    def test_empty_region_error(self):
        mask = two_level_mask()
        with pytest.raises(EmptyRegionError):
            cnr(np.zeros(mask.shape), mask, 7)
        all_fg = np.ones_like(mask)
        with pytest.raises(EmptyRegionError):
            cnr(np.zeros(mask.shape), all_fg, 1)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            cnr(np.zeros((4, 4)), np.zeros((4, 5), dtype=int), 1)


class TestRegionStats:
    def test_basic(self):
        mask = two_level_mask()
        img = mask * 5.0
        stats = region_stats(img, mask)
        assert stats[0].mean == 0.0 and stats[1].mean == 5.0
        assert stats[1].count == 64
        assert stats[0].std == 0.0


def four_region_mask(shape=(24, 24)):
    mask = np.zeros(shape, dtype=np.int64)
    mask[2:10, 2:10] = 1
    mask[2:10, 14:22] = 2
    mask[14:22, 2:10] = 3
    mask[14:22, 14:22] = 4
    return mask


class TestSeparability:
    def test_distinct_constants_hit_cap(self):
        mask = four_region_mask()
        img = np.zeros(mask.shape)
        for label, value in ((1, 1.0), (2, 2.0), (3, 3.0), (4, 4.0)):
            img[mask == label] = value
        matrix, labels = separability(img, mask)
        assert labels == [1, 2, 3, 4]
        off = matrix[~np.eye(4, dtype=bool)]
        assert (off == CNR_CAP).all()

    def test_identical_distributions_near_zero(self):
        mask = four_region_mask((48, 48))
        rng = np.random.default_rng(5)
        img = rng.normal(0, 1, mask.shape)
        matrix, labels = separability(img, mask, labels=[1, 2])
        assert matrix[0, 1] < 0.1

    def test_symmetry_and_zero_diagonal(self):
        mask = four_region_mask()
        rng = np.random.default_rng(6)
        img = rng.normal(0, 1, mask.shape) + mask
        matrix, _ = separability(img, mask)
        assert (matrix == matrix.T).all()
        assert (np.diag(matrix) == 0.0).all()

    def test_needs_two_labels(self):
        mask = two_level_mask()
        with pytest.raises(ValueError):
            separability(np.zeros(mask.shape), mask, labels=[1])

    def test_missing_label(self):
        mask = four_region_mask()
        with pytest.raises(EmptyRegionError):
            separability(np.zeros(mask.shape), mask, labels=[1, 9])


class TestEdgeSharpness:
    def test_ideal_step_closed_form(self):
        # vertical edge: gradient (b-a)/2 on the two edge columns, band is
        # four columns wide, IQR is b-a, so sharpness = 1/4 exactly
        h, w = 12, 16
        mask = np.zeros((h, w), dtype=np.int64)
        mask[:, 8:] = 1
        a, b = 1.0, 5.0
        img = np.where(mask == 1, b, a).astype(float)
        assert edge_sharpness(img, mask) == pytest.approx(0.25, abs=1e-12)

    def test_blur_reduces_sharpness(self):
        mask = np.zeros((32, 32), dtype=np.int64)
        mask[:, 16:] = 1
        img = mask.astype(float)
        sharp = edge_sharpness(img, mask)
        blurred = edge_sharpness(gaussian_filter(img, sigma=3.0), mask)
        assert blurred < sharp

    def test_constant_map_reports_zero(self):
        mask = two_level_mask()
        assert edge_sharpness(np.full(mask.shape, 3.3), mask) == 0.0

    def test_no_boundary_error(self):
        mask = np.ones((8, 8), dtype=np.int64)
        with pytest.raises(EmptyRegionError):
            edge_sharpness(np.zeros((8, 8)), mask)

    def test_boundary_mask_geometry(self):
        mask = two_level_mask()
        band = boundary_mask(mask)
        assert band[4, 4] and band[3, 3]
        assert not band[0, 0] and not band[8, 8]
