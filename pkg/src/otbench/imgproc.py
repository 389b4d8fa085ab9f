"""Channel operations, spatial filters, contrast enhancement and the
composed fundus preprocessing pipeline.

All filters use reflect padding (mirror about the edge pixel, edge not
duplicated, i.e. numpy's ``mode="reflect"``). Window sums accumulate
symmetric offset pairs first, so ``filter(flip(p)) == flip(filter(p))``
holds bit-exactly for the mean and Gaussian filters.

Every operation is a pure function; there is no shared mutable state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, ValidationError
from .image import validate_plane, validate_rgb

__all__ = [
    "ClaheParams",
    "NlmdParams",
    "PipelineConfig",
    "split_channels",
    "merge_channels",
    "invert_channel",
    "mean_filter",
    "illumination_equalize",
    "clip_intensity",
    "clahe_tile_mappings",
    "clahe",
    "gaussian_kernel",
    "gaussian_filter",
    "nlmd",
    "normalize_max",
    "normalize_gaussian",
    "preprocess",
    "preprocess_stages",
]


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class ClaheParams:
    """Contrast-limited adaptive histogram equalization settings.

    clip_limit is expressed as a multiple of the uniform bin height
    (tile_pixels / bins); math.inf disables clipping.
    """

    clip_limit: float = 2.0
    tile_grid: tuple[int, int] = (8, 8)
    bins: int = 256

    def __post_init__(self) -> None:
        rows, cols = self.tile_grid
        if rows < 1 or cols < 1:
            raise ValidationError(f"clahe: tile grid must be >= 1x1, got {self.tile_grid}")
        if self.bins < 2:
            raise ValidationError(f"clahe: need at least 2 histogram bins, got {self.bins}")
        if not self.clip_limit > 0:
            raise ValidationError(f"clahe: clip_limit must be > 0, got {self.clip_limit}")


@dataclass(frozen=True)
class NlmdParams:
    """Non-local means settings: (2*search_radius+1)^2 search window,
    (2*patch_radius+1)^2 patches, similarity bandwidth h."""

    search_radius: int = 10
    patch_radius: int = 3
    h: float = 0.1

    def __post_init__(self) -> None:
        if self.patch_radius < 0 or self.search_radius < self.patch_radius:
            raise ValidationError(
                f"nlmd: need search_radius >= patch_radius >= 0, got {self.search_radius}, {self.patch_radius}"
            )
        if not self.h > 0:
            raise ValidationError(f"nlmd: filter strength h must be > 0, got {self.h}")


# ---------------------------------------------------------------------------
# padding


def _reflect_pad(p: np.ndarray, radius: int, what: str) -> np.ndarray:
    if radius == 0:
        return p
    if radius > min(p.shape) - 1:
        raise ValidationError(
            f"{what}: window radius {radius} too large for {p.shape[0]}x{p.shape[1]} plane under reflect padding"
        )
    return np.pad(p, radius, mode="reflect")


def _check_window(k: int, what: str) -> int:
    if k < 1 or k % 2 == 0:
        raise ValidationError(f"{what}: window size must be a positive odd integer, got {k}")
    return (k - 1) // 2


# ---------------------------------------------------------------------------
# channel operations


def split_channels(img: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Split an (H, W, 3) image into its red, green and blue planes."""
    a = validate_rgb(img)
    return a[:, :, 0].copy(), a[:, :, 1].copy(), a[:, :, 2].copy()


def merge_channels(red: np.ndarray, green: np.ndarray, blue: np.ndarray) -> np.ndarray:
    """Inverse of split_channels."""
    r, g, b = (validate_plane(c, name=n) for c, n in ((red, "red"), (green, "green"), (blue, "blue")))
    if not (r.shape == g.shape == b.shape):
        raise ValidationError(f"merge_channels: plane shapes differ: {r.shape}, {g.shape}, {b.shape}")
    return np.stack([r, g, b], axis=2)


def invert_channel(p: np.ndarray) -> np.ndarray:
    """Intensity inversion: each pixel becomes 1 - value."""
    return 1.0 - validate_plane(p)


# ---------------------------------------------------------------------------
# mean filter and illumination equalization


def mean_filter(p: np.ndarray, k: int) -> np.ndarray:
    """Arithmetic mean over the k x k neighborhood, reflect padded.

    k must be odd. Separable implementation; each 1-D window sum adds the
    symmetric offset pair (x-d, x+d) first so the result commutes with
    horizontal/vertical flips bit-exactly.
    """
    a = validate_plane(p)
    r = _check_window(k, "mean_filter")
    if r == 0:
        return a.copy()
    h, w = a.shape
    padded = _reflect_pad(a, r, "mean_filter")
    rows = padded[:, r : r + w].copy()
    for d in range(1, r + 1):
        rows += padded[:, r - d : r - d + w] + padded[:, r + d : r + d + w]
    out = rows[r : r + h, :].copy()
    for d in range(1, r + 1):
        out += rows[r - d : r - d + h, :] + rows[r + d : r + d + h, :]
    out /= float(k * k)
    return out


def illumination_equalize(p: np.ndarray, k: int = 51) -> np.ndarray:
    """Background-subtraction shading correction.

    The k x k mean filter estimates the background, which is subtracted
    and recentered at the global mean intensity; the result is clamped
    back to [0, 1].
    """
    a = validate_plane(p)
    background = mean_filter(a, k)
    out = a - background + float(a.mean())
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# CLAHE


def clip_intensity(value: float, clip_limit: float) -> float:
    """Limit an equalized intensity to the allowed maximum."""
    return value if value <= clip_limit else clip_limit


def _tile_edges(extent: int, tiles: int) -> list[tuple[int, int]]:
    return [(i * extent // tiles, (i + 1) * extent // tiles) for i in range(tiles)]


def clahe_tile_mappings(p: np.ndarray, params: ClaheParams) -> np.ndarray:
    """Per-tile equalization lookup tables, shape (rows, cols, bins).

    Each tile's histogram is clipped at clip_limit * tile_pixels / bins
    with the excess redistributed uniformly over all bins, then turned
    into a CDF mapping onto [0, 1]. Every mapping is monotone
    non-decreasing by construction.
    """
    a = validate_plane(p)
    rows, cols = params.tile_grid
    h, w = a.shape
    if rows > h or cols > w:
        raise ValidationError(f"clahe: tile grid {params.tile_grid} larger than {h}x{w} image")
    bins = params.bins
    bin_idx = np.minimum((a * bins).astype(np.int64), bins - 1)
    maps = np.empty((rows, cols, bins), dtype=np.float64)
    for ti, (r0, r1) in enumerate(_tile_edges(h, rows)):
        for tj, (c0, c1) in enumerate(_tile_edges(w, cols)):
            tile_bins = bin_idx[r0:r1, c0:c1]
            n = tile_bins.size
            hist = np.bincount(tile_bins.ravel(), minlength=bins).astype(np.float64)
            if math.isfinite(params.clip_limit):
                clip = params.clip_limit * n / bins
                excess = float(np.maximum(hist - clip, 0.0).sum())
                hist = np.minimum(hist, clip) + excess / bins
            maps[ti, tj] = np.cumsum(hist) / n
    return maps


def clahe(p: np.ndarray, params: ClaheParams = ClaheParams()) -> np.ndarray:
    """Contrast-limited adaptive histogram equalization.

    Tile mappings come from clahe_tile_mappings; each output pixel
    bilinearly interpolates the mapped value between the four nearest
    tile centers (edge pixels beyond the outermost centers use the edge
    tiles directly). Output stays in [0, 1].
    """
    a = validate_plane(p)
    maps = clahe_tile_mappings(a, params)
    rows, cols = params.tile_grid
    h, w = a.shape
    bins = params.bins
    bin_idx = np.minimum((a * bins).astype(np.int64), bins - 1)

    def centers(edges: list[tuple[int, int]]) -> np.ndarray:
        return np.array([(lo + hi - 1) / 2.0 for lo, hi in edges])

    def interp_coords(extent: int, ctr: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        pos = np.interp(np.arange(extent, dtype=np.float64), ctr, np.arange(len(ctr), dtype=np.float64))
        lo = np.minimum(pos.astype(np.int64), len(ctr) - 1)
        hi = np.minimum(lo + 1, len(ctr) - 1)
        return lo, hi, pos - lo

    r_lo, r_hi, wy = interp_coords(h, centers(_tile_edges(h, rows)))
    c_lo, c_hi, wx = interp_coords(w, centers(_tile_edges(w, cols)))
    wy = wy[:, None]
    wx = wx[None, :]
    top = (1.0 - wx) * maps[r_lo[:, None], c_lo[None, :], bin_idx] + wx * maps[r_lo[:, None], c_hi[None, :], bin_idx]
    bot = (1.0 - wx) * maps[r_hi[:, None], c_lo[None, :], bin_idx] + wx * maps[r_hi[:, None], c_hi[None, :], bin_idx]
    return (1.0 - wy) * top + wy * bot


# ---------------------------------------------------------------------------
# Gaussian filter


def gaussian_kernel(sigma: float, k: int) -> np.ndarray:
    """Centered k x k Gaussian weights, renormalized to unit sum.

    Offsets run over i - (k-1)/2 so the kernel peaks at its center.
    """
    if not sigma > 0:
        raise ValidationError(f"gaussian_kernel: sigma must be > 0, got {sigma}")
    r = _check_window(k, "gaussian_kernel")
    offsets = np.arange(k, dtype=np.float64) - r
    sq = offsets**2
    weights = np.exp(-(sq[:, None] + sq[None, :]) / (2.0 * sigma * sigma))
    return weights / weights.sum()


def gaussian_filter(p: np.ndarray, sigma: float, k: int) -> np.ndarray:
    """2-D convolution with a centered Gaussian kernel, reflect padded.

    Accumulates the four symmetric offsets of each (i, j) pair together,
    which makes the filter commute bit-exactly with flips (the kernel is
    4-fold symmetric, so convolution and correlation coincide).
    """
    a = validate_plane(p)
    kernel = gaussian_kernel(sigma, k)
    r = (k - 1) // 2
    if r == 0:
        return a.copy()
    h, w = a.shape
    padded = _reflect_pad(a, r, "gaussian_filter")

    def shift(di: int, dj: int) -> np.ndarray:
        return padded[r + di : r + di + h, r + dj : r + dj + w]

    out = kernel[r, r] * shift(0, 0)
    for j in range(1, r + 1):
        out += kernel[r, r + j] * (shift(0, j) + shift(0, -j))
    for i in range(1, r + 1):
        out += kernel[r + i, r] * (shift(i, 0) + shift(-i, 0))
        for j in range(1, r + 1):
            out += kernel[r + i, r + j] * ((shift(i, j) + shift(i, -j)) + (shift(-i, j) + shift(-i, -j)))
    return out


# ---------------------------------------------------------------------------
# non-local means


def nlmd(p: np.ndarray, params: NlmdParams = NlmdParams()) -> np.ndarray:
    """Non-local means denoising.

    Each pixel becomes the weighted average of the pixels in its search
    window, with weight exp(-||patch_i - patch_j||^2 / h^2) from the raw
    sum of squared differences between the two patches. The center pixel
    participates with weight 1. Patches and window neighbors beyond the
    image border are reflect padded.
    """
    a = validate_plane(p)
    s, f, h2 = params.search_radius, params.patch_radius, params.h * params.h
    pad = _reflect_pad(a, s + f, "nlmd")
    hh, ww = a.shape
    base = pad  # alias; offsets are taken relative to the (s+f) origin
    o = s + f
    num = np.zeros_like(a)
    den = np.zeros_like(a)
    patch = 2 * f + 1
    for di in range(-s, s + 1):
        for dj in range(-s, s + 1):
            # squared difference field on a patch-extended region
            region = np.s_[o - f : o + hh + f, o - f : o + ww + f]
            shifted = pad[o + di - f : o + di + hh + f, o + dj - f : o + dj + ww + f]
            sq = (shifted - base[region]) ** 2
            rowacc = sq[:, 0:ww].copy()
            for x in range(1, patch):
                rowacc += sq[:, x : x + ww]
            ssd = rowacc[0:hh, :].copy()
            for y in range(1, patch):
                ssd += rowacc[y : y + hh, :]
            wgt = np.exp(-ssd / h2)
            num += wgt * pad[o + di : o + di + hh, o + dj : o + dj + ww]
            den += wgt
    return num / den


# ---------------------------------------------------------------------------
# normalization


def normalize_max(p: np.ndarray) -> np.ndarray:
    """Scale so the brightest pixel is exactly 1."""
    a = validate_plane(p)
    peak = float(a.max())
    if peak <= 0.0:
        raise DegenerateInputError("normalize_max: all-zero plane has no defined scale")
    return a / peak


def normalize_gaussian(p: np.ndarray) -> np.ndarray:
    """Zero-mean, unit-population-std rescaling. Input and output are
    unclamped; this is the one operation exempt from the [0, 1] plane
    convention and downstream consumers must expect that."""
    a = validate_plane(p, clamped=False)
    std = float(a.std())
    if std == 0.0:
        raise DegenerateInputError("normalize_gaussian: constant plane has zero variance")
    return (a - float(a.mean())) / std


# ---------------------------------------------------------------------------
# composed pipeline


@dataclass(frozen=True)
class PipelineConfig:
    """Preprocessing pipeline configuration.

    The default pipeline takes the inverted green channel through
    illumination equalization, CLAHE, Gaussian smoothing (51 x 51 window,
    sigma = (k-1)/6 so the window spans three standard deviations) and
    max normalization. The denoiser can be switched to non-local means
    and the normalizer to the zero-mean unit-std variant.
    """

    mean_window: int = 51
    denoiser: str = "gaussian"  # gaussian | nlmd
    gaussian_window: int = 51
    gaussian_sigma: float | None = None  # defaults to (gaussian_window - 1) / 6
    normalizer: str = "max"  # max | gaussian
    clahe: ClaheParams = field(default_factory=ClaheParams)
    nlmd: NlmdParams = field(default_factory=NlmdParams)

    def __post_init__(self) -> None:
        if self.denoiser not in ("gaussian", "nlmd"):
            raise ValidationError(f"pipeline: unknown denoiser {self.denoiser!r}")
        if self.normalizer not in ("max", "gaussian"):
            raise ValidationError(f"pipeline: unknown normalizer {self.normalizer!r}")
        _check_window(self.mean_window, "pipeline mean_window")
        _check_window(self.gaussian_window, "pipeline gaussian_window")
        if self.gaussian_sigma is not None and not self.gaussian_sigma > 0:
            raise ValidationError(f"pipeline: gaussian_sigma must be > 0, got {self.gaussian_sigma}")

    @property
    def sigma(self) -> float:
        if self.gaussian_sigma is not None:
            return self.gaussian_sigma
        return max((self.gaussian_window - 1) / 6.0, 1e-12)

    def stage_names(self) -> list[str]:
        denoise = "gaussian_filter" if self.denoiser == "gaussian" else "nlmd"
        normalize = "normalize_max" if self.normalizer == "max" else "normalize_gaussian"
        return ["split_channels", "invert_channel", "illumination_equalize", "clahe", denoise, normalize]


def preprocess_stages(img: np.ndarray, cfg: PipelineConfig = PipelineConfig()) -> list[tuple[str, np.ndarray]]:
    """Run the pipeline and keep every intermediate, as (stage, plane) pairs."""
    _, green, _ = split_channels(img)
    stages = [("split_channels", green)]
    plane = invert_channel(green)
    stages.append(("invert_channel", plane))
    plane = illumination_equalize(plane, cfg.mean_window)
    stages.append(("illumination_equalize", plane))
    plane = clahe(plane, cfg.clahe)
    stages.append(("clahe", plane))
    if cfg.denoiser == "gaussian":
        plane = gaussian_filter(plane, cfg.sigma, cfg.gaussian_window)
        stages.append(("gaussian_filter", plane))
    else:
        plane = nlmd(plane, cfg.nlmd)
        stages.append(("nlmd", plane))
    if cfg.normalizer == "max":
        plane = normalize_max(plane)
        stages.append(("normalize_max", plane))
    else:
        plane = normalize_gaussian(plane)
        stages.append(("normalize_gaussian", plane))
    return stages


def preprocess(img: np.ndarray, cfg: PipelineConfig = PipelineConfig()) -> np.ndarray:
    """Full preprocessing pipeline: green channel split and inversion,
    illumination equalization, CLAHE, denoising, normalization."""
    return preprocess_stages(img, cfg)[-1][1]
