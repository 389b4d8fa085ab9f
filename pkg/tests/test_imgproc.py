"""Filters, contrast enhancement, normalization and the composed pipeline.

Brute-force reference implementations live in this file and are kept
deliberately independent of the library's vectorized code paths.
"""

import math

import numpy as np
import pytest

from otbench.errors import DegenerateInputError, ValidationError
from otbench.imgproc import (
    ClaheParams,
    NlmdParams,
    PipelineConfig,
    clahe,
    clahe_tile_mappings,
    clip_intensity,
    gaussian_filter,
    gaussian_kernel,
    illumination_equalize,
    invert_channel,
    mean_filter,
    merge_channels,
    nlmd,
    normalize_gaussian,
    normalize_max,
    preprocess,
    preprocess_stages,
    split_channels,
)


# ---------------------------------------------------------------------------
# oracles


def reflect_index(i: int, n: int) -> int:
    """Mirror about the edge pixel without duplicating it."""
    if n == 1:
        return 0
    period = 2 * n - 2
    m = i % period
    return period - m if m >= n else m


def brute_mean_filter(p: np.ndarray, k: int) -> np.ndarray:
    r = k // 2
    h, w = p.shape
    out = np.empty_like(p)
    for y in range(h):
        for x in range(w):
            s = 0.0
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    s += p[reflect_index(y + dy, h), reflect_index(x + dx, w)]
            out[y, x] = s / (k * k)
    return out


def brute_gaussian_filter(p: np.ndarray, sigma: float, k: int) -> np.ndarray:
    r = k // 2
    offsets = [i - r for i in range(k)]
    weights = [[math.exp(-(a * a + b * b) / (2 * sigma * sigma)) for b in offsets] for a in offsets]
    total = sum(sum(row) for row in weights)
    h, w = p.shape
    out = np.empty_like(p)
    for y in range(h):
        for x in range(w):
            s = 0.0
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    s += weights[dy + r][dx + r] / total * p[reflect_index(y + dy, h), reflect_index(x + dx, w)]
            out[y, x] = s
    return out


def brute_nlmd(p: np.ndarray, search: int, patch: int, h: float) -> np.ndarray:
    h2 = h * h
    hh, ww = p.shape

    def px(y, x):
        return p[reflect_index(y, hh), reflect_index(x, ww)]

    out = np.empty_like(p)
    for y in range(hh):
        for x in range(ww):
            num = den = 0.0
            for dy in range(-search, search + 1):
                for dx in range(-search, search + 1):
                    ssd = 0.0
                    for py in range(-patch, patch + 1):
                        for qx in range(-patch, patch + 1):
                            d = px(y + dy + py, x + dx + qx) - px(y + py, x + qx)
                            ssd += d * d
                    wgt = math.exp(-ssd / h2)
                    num += wgt * px(y + dy, x + dx)
                    den += wgt
            out[y, x] = num / den
    return out


def brute_histogram_equalize(p: np.ndarray, bins: int) -> np.ndarray:
    """Plain global histogram equalization via the empirical CDF."""
    n = p.size
    b = np.minimum((p * bins).astype(int), bins - 1)
    out = np.empty_like(p)
    for y in range(p.shape[0]):
        for x in range(p.shape[1]):
            out[y, x] = np.count_nonzero(b <= b[y, x]) / n
    return out


# ---------------------------------------------------------------------------
# channel ops


class TestChannels:
    def test_single_pixel_projection(self):
        img = np.array([[[0.2, 0.4, 0.6]]])
        r, g, b = split_channels(img)
        assert r[0, 0] == 0.2 and g[0, 0] == 0.4 and b[0, 0] == 0.6

    def test_gray_encoded_rgb(self):
        plane = np.random.default_rng(0).random((5, 7))
        img = np.stack([plane] * 3, axis=2)
        r, g, b = split_channels(img)
        assert np.array_equal(r, g) and np.array_equal(g, b) and np.array_equal(r, plane)

    def test_split_merge_roundtrip(self):
        img = np.random.default_rng(1).random((6, 4, 3))
        assert np.array_equal(merge_channels(*split_channels(img)), img)

    def test_invert_examples(self):
        np.testing.assert_array_equal(invert_channel(np.array([[0.0, 1.0, 0.25]])), [[1.0, 0.0, 0.75]])
        half = np.full((3, 3), 0.5)
        np.testing.assert_array_equal(invert_channel(half), half)

    def test_invert_involution_bit_exact(self):
        # rng.random() yields multiples of 2**-53, for which 1-(1-x)
        # recovers x exactly; 8-bit decoded planes may lose one ulp.
        p = np.random.default_rng(2).random((16, 16))
        assert np.array_equal(invert_channel(invert_channel(p)), p)
        eight_bit = np.arange(256).reshape(16, 16) / 255.0
        np.testing.assert_allclose(invert_channel(invert_channel(eight_bit)), eight_bit, rtol=0, atol=1e-15)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValidationError):
            invert_channel(np.array([[1.5]]))


# ---------------------------------------------------------------------------
# mean filter / illumination


class TestMeanFilter:
    def test_constant_plane(self):
        for k in (1, 3, 7):
            np.testing.assert_allclose(mean_filter(np.full((6, 6), 0.37), k), 0.37, rtol=0, atol=1e-15)

    def test_center_impulse(self):
        plane = np.zeros((3, 3))
        plane[1, 1] = 0.9
        assert mean_filter(plane, 3)[1, 1] == pytest.approx(0.1, abs=1e-12)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(3)
        p = rng.random((16, 16))
        assert np.abs(mean_filter(p, 5) - brute_mean_filter(p, 5)).max() <= 1e-9

    def test_even_window_rejected(self):
        with pytest.raises(ValidationError):
            mean_filter(np.zeros((4, 4)), 2)
        with pytest.raises(ValidationError):
            mean_filter(np.zeros((4, 4)), -3)

    def test_flip_commutation_bit_exact(self):
        rng = np.random.default_rng(4)
        p = rng.random((11, 13))
        for k in (3, 5, 7):
            out = mean_filter(p, k)
            assert np.array_equal(mean_filter(p[:, ::-1].copy(), k), out[:, ::-1])
            assert np.array_equal(mean_filter(p[::-1, :].copy(), k), out[::-1, :])


class TestIlluminationEqualize:
    def test_constant_fixed_point(self):
        c = np.full((5, 5), 0.42)
        np.testing.assert_allclose(illumination_equalize(c, 3), c, rtol=0, atol=1e-15)

    def test_center_impulse_value(self):
        plane = np.zeros((3, 3))
        plane[1, 1] = 0.9
        # background at center 0.1, global mean 0.1 -> 0.9 - 0.1 + 0.1
        assert illumination_equalize(plane, 3)[1, 1] == pytest.approx(0.9, abs=1e-12)

    def test_equals_composition(self):
        rng = np.random.default_rng(5)
        p = rng.random((16, 16))
        expected = np.clip(p - mean_filter(p, 5) + p.mean(), 0.0, 1.0)
        assert np.array_equal(illumination_equalize(p, 5), expected)

    def test_output_clamped(self):
        rng = np.random.default_rng(6)
        p = rng.random((12, 12))
        out = illumination_equalize(p, 7)
        assert out.min() >= 0.0 and out.max() <= 1.0


# ---------------------------------------------------------------------------
# CLAHE


class TestClahe:
    def test_clip_step(self):
        assert clip_intensity(0.9, 0.8) == 0.8
        assert clip_intensity(0.7, 0.8) == 0.7

    def test_single_tile_equals_plain_equalization(self):
        rng = np.random.default_rng(7)
        p = rng.random((4, 4))
        params = ClaheParams(clip_limit=math.inf, tile_grid=(1, 1), bins=16)
        np.testing.assert_allclose(clahe(p, params), brute_histogram_equalize(p, 16), rtol=0, atol=1e-12)

    def test_tile_mapping_monotone_and_order_preserving(self):
        rng = np.random.default_rng(8)
        params = ClaheParams(tile_grid=(2, 2), bins=64)
        for _ in range(5):
            p = rng.random((32, 32))
            maps = clahe_tile_mappings(p, params)
            assert np.all(np.diff(maps, axis=2) >= 0.0)
            # per-tile mapping preserves value order among that tile's pixels
            bins = np.minimum((p * 64).astype(int), 63)
            for ti in range(2):
                for tj in range(2):
                    tile_vals = p[ti * 16 : (ti + 1) * 16, tj * 16 : (tj + 1) * 16].ravel()
                    tile_bins = bins[ti * 16 : (ti + 1) * 16, tj * 16 : (tj + 1) * 16].ravel()
                    mapped = maps[ti, tj][tile_bins]
                    order = np.argsort(tile_vals, kind="stable")
                    assert np.all(np.diff(mapped[order]) >= -1e-15)

    def test_output_in_unit_range(self):
        rng = np.random.default_rng(9)
        p = rng.random((33, 31))
        out = clahe(p, ClaheParams(tile_grid=(4, 3), bins=32))
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_grid_larger_than_image(self):
        with pytest.raises(ValidationError):
            clahe(np.zeros((4, 4)), ClaheParams(tile_grid=(8, 8)))

    def test_clipping_flattens_peaks(self):
        # heavily clipped histogram approaches the identity-like ramp
        p = np.full((16, 16), 0.5)
        p[0, 0] = 0.9
        strict = clahe(p, ClaheParams(clip_limit=1.0, tile_grid=(1, 1), bins=16))
        free = clahe(p, ClaheParams(clip_limit=math.inf, tile_grid=(1, 1), bins=16))
        # without clipping the constant bulk jumps to its full CDF value
        assert free[1, 1] > strict[1, 1]


# ---------------------------------------------------------------------------
# Gaussian


class TestGaussian:
    def test_kernel_k1(self):
        np.testing.assert_array_equal(gaussian_kernel(2.0, 1), [[1.0]])

    def test_kernel_3x3_sigma1(self):
        k = gaussian_kernel(1.0, 3)
        ring = np.exp(-0.5)
        corner = np.exp(-1.0)
        total = 1.0 + 4 * ring + 4 * corner
        assert total == pytest.approx(4.8976, abs=5e-5)
        assert k[1, 1] == pytest.approx(0.2042, abs=5e-5)
        assert k[1, 1] == pytest.approx(1.0 / total, rel=1e-12)

    def test_kernel_unit_sum_and_symmetry(self):
        for sigma, k in ((0.5, 3), (1.7, 5), (8.5, 51)):
            kern = gaussian_kernel(sigma, k)
            assert abs(kern.sum() - 1.0) <= 1e-9
            assert np.array_equal(kern, kern[::-1, :])
            assert np.array_equal(kern, kern[:, ::-1])
            assert np.array_equal(kern, kern.T)

    def test_invalid_params(self):
        with pytest.raises(ValidationError):
            gaussian_kernel(0.0, 3)
        with pytest.raises(ValidationError):
            gaussian_kernel(1.0, 4)

    def test_constant_plane(self):
        np.testing.assert_allclose(gaussian_filter(np.full((8, 8), 0.6), 1.0, 5), 0.6, rtol=0, atol=1e-12)

    def test_impulse_reproduces_kernel(self):
        plane = np.zeros((11, 11))
        plane[5, 5] = 1.0
        out = gaussian_filter(plane, 1.0, 3)
        np.testing.assert_allclose(out[4:7, 4:7], gaussian_kernel(1.0, 3), rtol=0, atol=1e-15)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(10)
        p = rng.random((16, 16))
        assert np.abs(gaussian_filter(p, 1.3, 5) - brute_gaussian_filter(p, 1.3, 5)).max() <= 1e-9

    def test_flip_commutation_bit_exact(self):
        rng = np.random.default_rng(11)
        p = rng.random((10, 14))
        out = gaussian_filter(p, 1.1, 5)
        assert np.array_equal(gaussian_filter(p[:, ::-1].copy(), 1.1, 5), out[:, ::-1])
        assert np.array_equal(gaussian_filter(p[::-1, :].copy(), 1.1, 5), out[::-1, :])


# ---------------------------------------------------------------------------
# non-local means


class TestNlmd:
    def test_constant_plane(self):
        params = NlmdParams(search_radius=2, patch_radius=1, h=0.2)
        np.testing.assert_allclose(nlmd(np.full((8, 8), 0.3), params), 0.3, rtol=0, atol=1e-12)

    def test_large_h_limit_is_window_mean(self):
        rng = np.random.default_rng(12)
        p = rng.random((12, 12))
        out = nlmd(p, NlmdParams(search_radius=2, patch_radius=1, h=1e6))
        assert np.abs(out - mean_filter(p, 5)).max() <= 1e-6

    def test_matches_brute_force(self):
        rng = np.random.default_rng(13)
        p = rng.random((12, 12))
        out = nlmd(p, NlmdParams(search_radius=2, patch_radius=1, h=0.4))
        assert np.abs(out - brute_nlmd(p, 2, 1, 0.4)).max() <= 1e-9

    def test_param_validation(self):
        with pytest.raises(ValidationError):
            NlmdParams(search_radius=1, patch_radius=2)
        with pytest.raises(ValidationError):
            NlmdParams(h=0.0)


# ---------------------------------------------------------------------------
# normalization


class TestNormalization:
    def test_max_direct(self):
        np.testing.assert_allclose(normalize_max(np.array([[0.2, 0.4, 0.8]])), [[0.25, 0.5, 1.0]])

    def test_max_fixed_point(self):
        p = np.array([[0.3, 1.0], [0.1, 0.6]])
        assert np.array_equal(normalize_max(p), p)

    def test_max_zero_plane_errors(self):
        with pytest.raises(DegenerateInputError):
            normalize_max(np.zeros((3, 3)))

    def test_gaussian_two_values(self):
        # mean 1, population std 1
        np.testing.assert_allclose(normalize_gaussian(np.array([[0.0, 2.0]])), [[-1.0, 1.0]])

    def test_gaussian_standardizes(self):
        rng = np.random.default_rng(14)
        p = rng.random((9, 9))
        out = normalize_gaussian(p)
        assert abs(out.mean()) <= 1e-9
        assert abs(out.std() - 1.0) <= 1e-9

    def test_gaussian_constant_errors(self):
        with pytest.raises(DegenerateInputError):
            normalize_gaussian(np.full((4, 4), 0.5))


# ---------------------------------------------------------------------------
# pipeline


def small_pipeline() -> PipelineConfig:
    return PipelineConfig(
        mean_window=9,
        gaussian_window=9,
        clahe=ClaheParams(tile_grid=(2, 2), bins=64),
        nlmd=NlmdParams(search_radius=2, patch_radius=1, h=0.2),
    )


class TestPipeline:
    def test_equals_manual_composition(self):
        rng = np.random.default_rng(15)
        img = rng.random((24, 24, 3))
        cfg = small_pipeline()
        _, green, _ = split_channels(img)
        manual = normalize_max(
            gaussian_filter(
                clahe(illumination_equalize(invert_channel(green), cfg.mean_window), cfg.clahe),
                cfg.sigma,
                cfg.gaussian_window,
            )
        )
        assert np.array_equal(preprocess(img, cfg), manual)

    def test_nlmd_variant_composition(self):
        rng = np.random.default_rng(16)
        img = rng.random((16, 16, 3))
        cfg = PipelineConfig(
            mean_window=5,
            denoiser="nlmd",
            normalizer="gaussian",
            clahe=ClaheParams(tile_grid=(2, 2), bins=32),
            nlmd=NlmdParams(search_radius=2, patch_radius=1, h=0.3),
        )
        _, green, _ = split_channels(img)
        manual = normalize_gaussian(
            nlmd(clahe(illumination_equalize(invert_channel(green), 5), cfg.clahe), cfg.nlmd)
        )
        assert np.array_equal(preprocess(img, cfg), manual)

    def test_deterministic(self):
        rng = np.random.default_rng(17)
        img = rng.random((24, 24, 3))
        cfg = small_pipeline()
        assert np.array_equal(preprocess(img, cfg), preprocess(img.copy(), cfg))

    def test_stage_order_metadata(self):
        cfg = small_pipeline()
        names = [name for name, _ in preprocess_stages(np.random.default_rng(18).random((24, 24, 3)), cfg)]
        assert names == cfg.stage_names()
        assert names == [
            "split_channels",
            "invert_channel",
            "illumination_equalize",
            "clahe",
            "gaussian_filter",
            "normalize_max",
        ]

    def test_default_config_mirrors_finalized_pipeline(self):
        cfg = PipelineConfig()
        assert cfg.mean_window == 51 and cfg.gaussian_window == 51
        assert cfg.denoiser == "gaussian" and cfg.normalizer == "max"
        assert cfg.sigma == pytest.approx(50 / 6)

    def test_filters_preserve_unit_range(self):
        rng = np.random.default_rng(19)
        p = rng.random((16, 16))
        for out in (
            mean_filter(p, 5),
            gaussian_filter(p, 1.0, 5),
            nlmd(p, NlmdParams(search_radius=2, patch_radius=1, h=0.3)),
            clahe(p, ClaheParams(tile_grid=(2, 2), bins=32)),
            illumination_equalize(p, 5),
            normalize_max(p),
            invert_channel(p),
        ):
            assert out.min() >= -1e-12 and out.max() <= 1.0 + 1e-12
