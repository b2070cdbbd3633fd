import numpy as np
import pytest

from diestudy.errors import Degenerate
from diestudy.homography import (
    fit_homographies_batch,
    fit_homography_dlt,
    projective_apply,
    sample_degeneracy_mask,
    symmetric_transfer_error,
)

UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def random_homography(rng, scale=200.0):
    """Well-conditioned random homography via jittered-square interpolation."""
    src = UNIT_SQUARE * scale
    dst = src + rng.uniform(-0.15 * scale, 0.15 * scale, (4, 2))
    return fit_homography_dlt(src, dst)


class TestFit:
    def test_identity_square(self):
        h = fit_homography_dlt(UNIT_SQUARE, UNIT_SQUARE)
        np.testing.assert_allclose(h, np.eye(3), atol=1e-9)

    def test_translation(self):
        h = fit_homography_dlt(UNIT_SQUARE, UNIT_SQUARE + [2.0, 3.0])
        expected = np.array([[1, 0, 2], [0, 1, 3], [0, 0, 1]], dtype=float)
        np.testing.assert_allclose(h, expected, atol=1e-9)

    def test_collinear_source_degenerate(self):
        src = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
        with pytest.raises(Degenerate):
            fit_homography_dlt(src, UNIT_SQUARE * 3)

    def test_three_collinear_degenerate(self):
        src = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [1.0, 5.0]])
        with pytest.raises(Degenerate):
            fit_homography_dlt(src, UNIT_SQUARE)

    def test_too_few_points(self):
        with pytest.raises(Degenerate):
            fit_homography_dlt(UNIT_SQUARE[:3], UNIT_SQUARE[:3])

    @pytest.mark.parametrize("seed", [0, 1, 3, 5, 6])  # non-degenerate draws
    def test_four_point_exact_fit(self, seed):
        rng = np.random.default_rng(seed)
        h_true = random_homography(rng)
        src = rng.uniform(10.0, 190.0, (4, 2))
        assert sample_degeneracy_mask(src[None], projective_apply(h_true, src)[None])[0]
        dst = projective_apply(h_true, src)
        h = fit_homography_dlt(src, dst)
        err = symmetric_transfer_error(h, np.column_stack([src, dst]))
        assert err.max() < 1e-8

    @pytest.mark.parametrize("seed", range(5))
    def test_overdetermined_consistent_fit(self, seed):
        rng = np.random.default_rng(100 + seed)
        h_true = random_homography(rng)
        src = rng.uniform(10.0, 190.0, (12, 2))
        dst = projective_apply(h_true, src)
        h = fit_homography_dlt(src, dst)
        err = symmetric_transfer_error(h, np.column_stack([src, dst]))
        assert err.max() < 1e-9


class TestTransferError:
    def test_identity_zero(self):
        corr = np.array([[5.0, 7.0, 5.0, 7.0]])
        assert symmetric_transfer_error(np.eye(3), corr)[0] == 0.0

    def test_translation_forward_plus_backward(self):
        h = np.array([[1.0, 0.0, 2.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        corr = np.array([[0.0, 0.0, 0.0, 0.0]])
        assert symmetric_transfer_error(h, corr)[0] == pytest.approx(8.0, abs=1e-12)

    def test_point_at_infinity_is_outlier(self):
        h = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, -1.0]])  # w = x - 1
        corr = np.array([[1.0, 0.0, 9.0, 9.0]])
        assert symmetric_transfer_error(h, corr)[0] == np.inf

    @pytest.mark.parametrize("seed", range(3))
    def test_generated_correspondences_zero_error(self, seed):
        rng = np.random.default_rng(50 + seed)
        h = random_homography(rng)
        src = rng.uniform(0.0, 200.0, (30, 2))
        dst = projective_apply(h, src)
        err = symmetric_transfer_error(h, np.column_stack([src, dst]))
        assert err.max() < 1e-9


class TestDegeneracyMask:
    def test_collinear_rejected(self):
        src = np.array([[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [0.0, 5.0]]])
        assert not sample_degeneracy_mask(src, src)[0]

    def test_point_inside_triangle_rejected(self):
        src = np.array([[[0.0, 0.0], [10.0, 0.0], [5.0, 10.0], [5.0, 3.0]]])
        assert not sample_degeneracy_mask(src, src)[0]

    def test_convex_quad_accepted(self):
        src = UNIT_SQUARE[None] * 10.0
        assert sample_degeneracy_mask(src, src)[0]

    def test_checks_both_sides(self):
        good = UNIT_SQUARE[None] * 10.0
        bad = np.array([[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [0.0, 5.0]]])
        assert not sample_degeneracy_mask(good, bad)[0]
        assert not sample_degeneracy_mask(bad, good)[0]


def test_batch_fit_agrees_with_dlt():
    rng = np.random.default_rng(2)
    kept = 0
    while kept < 20:
        src = rng.uniform(0.0, 512.0, (1, 4, 2))
        dst = rng.uniform(0.0, 512.0, (1, 4, 2))
        if not sample_degeneracy_mask(src, dst)[0]:
            continue
        h, ok = fit_homographies_batch(src, dst)
        if not ok[0]:
            continue
        ref = fit_homography_dlt(src[0], dst[0])
        np.testing.assert_allclose(h[0] / h[0, 2, 2], ref / ref[2, 2], atol=1e-6)
        kept += 1
