import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cstscan.errors import DimensionError, DomainError
from cstscan.image import (
    GrayImage,
    compute_histogram,
    equalize_adaptive,
    make_patch_grid,
    to_grayscale,
)

from oracles import naive_equalize, naive_histogram


def gray(arr, levels=256):
    return GrayImage(np.asarray(arr, dtype=np.uint8 if levels <= 256 else np.uint16), levels)


class TestToGrayscale:
    def test_white_black_identity(self):
        rgb = np.zeros((2, 2, 3), dtype=np.uint8)
        rgb[0, 0] = (255, 255, 255)
        g = to_grayscale(rgb)
        assert g.pixels[0, 0] == 255
        assert g.pixels[1, 1] == 0

    def test_weighted_mix(self):
        rgb = np.array([[[100, 200, 50]]], dtype=np.uint8)
        expected = round(0.299 * 100 + 0.587 * 200 + 0.114 * 50)
        assert to_grayscale(rgb).pixels[0, 0] == expected == 153

    def test_gray_passthrough(self):
        arr = np.arange(12, dtype=np.uint8).reshape(3, 4)
        g = to_grayscale(arr)
        assert np.array_equal(g.pixels, arr)

    def test_mismatched_channels(self):
        with pytest.raises(DimensionError):
            to_grayscale(np.zeros((2, 2, 4), dtype=np.uint8))


class TestHistogram:
    def test_constant_region(self):
        img = gray(np.full((2, 2), 5), levels=8)
        h = compute_histogram(img, (0, 0, 2, 2))
        assert h.counts[5] == 4
        assert h.counts.sum() == 4
        assert h.cdf_min == 4

    def test_ramp_region(self):
        img = gray(np.array([[0, 1, 2, 3]]), levels=4)
        h = compute_histogram(img, (0, 0, 1, 4))
        assert list(h.cdf) == [1, 2, 3, 4]
        assert h.cdf_min == 1

    def test_matches_naive_counting(self):
        rng = np.random.default_rng(0)
        img = gray(rng.integers(0, 256, (16, 16)))
        h = compute_histogram(img, (0, 0, 16, 16))
        counts, cdf, cdf_min = naive_histogram(img.pixels, 256)
        assert list(h.counts) == counts
        assert list(h.cdf) == cdf
        assert h.cdf_min == cdf_min

    def test_empty_region_rejected(self):
        img = gray(np.zeros((4, 4)))
        with pytest.raises(DomainError):
            compute_histogram(img, (0, 0, 0, 2))
        with pytest.raises(DomainError):
            compute_histogram(img, (2, 2, 4, 4))

    @given(st.integers(0, 5), st.integers(0, 5), st.integers(1, 6), st.integers(1, 6))
    @settings(max_examples=30, deadline=None)
    def test_counts_sum_to_area(self, r0, c0, nr, nc):
        rng = np.random.default_rng(42)
        img = gray(rng.integers(0, 256, (12, 12)))
        h = compute_histogram(img, (r0, c0, nr, nc))
        assert h.counts.sum() == nr * nc


class TestEqualize:
    def test_constant_patch_maps_to_zero(self):
        img = gray(np.full((8, 8), 77))
        out = equalize_adaptive(img, make_patch_grid(8, 8, 2, 2))
        assert np.all(out.pixels == 0)

    def test_half_black_half_white(self):
        arr = np.zeros((4, 4), dtype=np.uint8)
        arr[2:, :] = 255
        out = equalize_adaptive(gray(arr), make_patch_grid(4, 4, 1, 1))
        # cdf(0)=8=cdf_min -> 0; cdf(255)=16 -> (16-8)/(16-8)*255
        assert np.all(out.pixels[:2] == 0)
        assert np.all(out.pixels[2:] == 255)

    def test_matches_naive_oracle_exactly(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            rows = int(rng.integers(8, 40))
            cols = int(rng.integers(8, 40))
            gr = int(rng.integers(1, 4))
            gc = int(rng.integers(1, 4))
            arr = rng.integers(0, 256, (rows, cols))
            out = equalize_adaptive(gray(arr), make_patch_grid(rows, cols, gr, gc))
            expected = naive_equalize(arr, 256, gr, gc)
            assert np.array_equal(out.pixels, expected)

    def test_literal_denominator_compresses(self):
        rng = np.random.default_rng(3)
        arr = rng.integers(0, 256, (32, 32))
        grid = make_patch_grid(32, 32, 4, 4)
        literal = equalize_adaptive(gray(arr), grid, literal_denominator=True)
        expected = naive_equalize(arr, 256, 4, 4, literal_total=32 * 32)
        assert np.array_equal(literal.pixels, expected)
        regular = equalize_adaptive(gray(arr), grid)
        assert literal.pixels.mean() < regular.pixels.mean()

    def test_rank_preserved_within_patch(self):
        rng = np.random.default_rng(11)
        arr = rng.integers(0, 256, (16, 16))
        img = gray(arr)
        out = equalize_adaptive(img, make_patch_grid(16, 16, 2, 2))
        patch_in = arr[:8, :8].ravel()
        patch_out = out.pixels[:8, :8].ravel()
        order = np.argsort(patch_in, kind="stable")
        mapped = patch_out[order]
        assert np.all(np.diff(mapped.astype(int))[np.diff(patch_in[order]) > 0] >= 0)

    def test_idempotent_on_uniform_histogram(self):
        # all levels equally frequent inside the patch
        arr = np.tile(np.arange(16, dtype=np.uint8) * 17, (16, 1))
        img = gray(arr)
        grid = make_patch_grid(16, 16, 1, 1)
        once = equalize_adaptive(img, grid)
        twice = equalize_adaptive(once, grid)
        assert np.max(np.abs(twice.pixels.astype(int) - once.pixels.astype(int))) <= 1

    def test_clip_limit_reduces_contrast_stretch(self):
        arr = np.full((16, 16), 10, dtype=np.uint8)
        arr[0, 0] = 200
        img = gray(arr)
        grid = make_patch_grid(16, 16, 1, 1)
        plain = equalize_adaptive(img, grid)
        clipped = equalize_adaptive(img, grid, clip_limit=2.0)
        assert clipped.pixels.max() <= plain.pixels.max()

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_output_stays_in_range(self, seed):
        rng = np.random.default_rng(seed)
        arr = rng.integers(0, 256, (int(rng.integers(4, 24)), int(rng.integers(4, 24))))
        img = gray(arr)
        out = equalize_adaptive(img, make_patch_grid(img.rows, img.cols, 2, 2))
        assert out.pixels.min() >= 0
        assert out.pixels.max() <= 255
        assert (out.rows, out.cols) == (img.rows, img.cols)


class TestGrayImage:
    def test_rejects_out_of_range(self):
        with pytest.raises(DomainError):
            GrayImage(np.array([[300]], dtype=np.uint16), 256)

    def test_rejects_empty(self):
        with pytest.raises(DimensionError):
            GrayImage(np.zeros((0, 4), dtype=np.uint8))

    def test_grid_must_tile(self):
        grid = make_patch_grid(10, 10, 3, 3)
        covered = np.zeros((10, 10), dtype=int)
        for r0, r1, c0, c1 in grid.boundaries:
            covered[r0:r1, c0:c1] += 1
        assert np.all(covered == 1)
