"""Per-image development: demosaic, resize/crop, sharpen or denoise,
micro-contrast, 8-bit conversion, grey conversion and 16-tile split.

Linear stages work on (H, W, 3) uint16 arrays and round half up back to
integers after every stage, so each stage output is exactly reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage, sparse

from .paramsample import Demosaic, DevRecipe, ResizeKernel
from .rawio import CfaImage

USM_RADIUS = 1.0
MC_RADIUS = 1.0
DENOISE_LEVELS = 4
TILE_GRID = 4


class DevelopError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


class ConfigurationError(ValueError):
    pass


def _to_uint16(x, white_level=65535):
    x = np.add(x, 0.5)
    np.floor(x, out=x)
    np.clip(x, 0, white_level, out=x)
    return x.astype(np.uint16)


# ---------------------------------------------------------------------------
# demosaicing

# Malvar-He-Cutler 5x5 kernels (scaled by 8)
_K_G_AT_RB = np.array([
    [0, 0, -1, 0, 0],
    [0, 0, 2, 0, 0],
    [-1, 2, 4, 2, -1],
    [0, 0, 2, 0, 0],
    [0, 0, -1, 0, 0],
], dtype=np.float64) / 8
_K_ROW = np.array([
    [0, 0, 0.5, 0, 0],
    [0, -1, 0, -1, 0],
    [-1, 4, 5, 4, -1],
    [0, -1, 0, -1, 0],
    [0, 0, 0.5, 0, 0],
], dtype=np.float64) / 8
_K_COL = _K_ROW.T
_K_DIAG = np.array([
    [0, 0, -1.5, 0, 0],
    [0, 2, 0, 2, 0],
    [-1.5, 0, 6, 0, -1.5],
    [0, 2, 0, 2, 0],
    [0, 0, -1.5, 0, 0],
], dtype=np.float64) / 8


def _site_masks(cfa: CfaImage):
    cmap = cfa.channel_map()
    h, w = cmap.shape
    red, green, blue = cmap == 0, cmap == 1, cmap == 2
    red_row = np.zeros((h, w), dtype=bool)
    cell = cfa.pattern.channels()
    for dy in range(2):
        if 0 in cell[dy]:
            red_row[dy::2, :] = True
    return red, green, blue, red_row


def demosaic_fast(cfa: CfaImage) -> np.ndarray:
    """Nearest-neighbour demosaic: each 2x2 cell shares its R and B samples,
    non-green sites take the green sample of their own row."""
    s = cfa.samples
    h, w = s.shape
    cell = cfa.pattern.channels()
    out = np.empty((h, w, 3), dtype=np.uint16)
    pos = {c: [(dy, dx) for dy in range(2) for dx in range(2) if cell[dy, dx] == c] for c in range(3)}
    for c in (0, 2):
        dy, dx = pos[c][0]
        plane = s[dy::2, dx::2]
        for oy in range(2):
            for ox in range(2):
                out[oy::2, ox::2, c] = plane
    for oy in range(2):
        gx = [dx for dx in range(2) if cell[oy, dx] == 1][0]
        plane = s[oy::2, gx::2]
        for ox in range(2):
            out[oy::2, ox::2, 1] = plane
    return out


def demosaic_dcb_approx(cfa: CfaImage) -> np.ndarray:
    """Gradient-corrected bilinear demosaic (Malvar, He and Cutler, 2004).

    Stands in for DCB as the higher-quality of the two methods. Known sites
    keep their measured value; borders use mirror extension, which keeps
    the Bayer phase.
    """
    s = cfa.samples.astype(np.float32)
    red, green, blue, red_row = _site_masks(cfa)

    def conv(k):
        return ndimage.correlate(s, k.astype(np.float32), mode="mirror")

    g_rb = conv(_K_G_AT_RB)
    row = conv(_K_ROW)
    col = conv(_K_COL)
    diag = conv(_K_DIAG)

    r = np.where(red, s, np.float32(0))
    r = np.where(green & red_row, row, r)
    r = np.where(green & ~red_row, col, r)
    r = np.where(blue, diag, r)

    b = np.where(blue, s, np.float32(0))
    b = np.where(green & ~red_row, row, b)
    b = np.where(green & red_row, col, b)
    b = np.where(red, diag, b)

    g = np.where(green, s, g_rb)
    return _to_uint16(np.stack([r, g, b], axis=-1), cfa.white_level)


def demosaic(cfa: CfaImage, method=Demosaic.DCB) -> np.ndarray:
    method = Demosaic(method)
    if method is Demosaic.FAST:
        return demosaic_fast(cfa)
    return demosaic_dcb_approx(cfa)


# ---------------------------------------------------------------------------
# resize and crop

@dataclass(frozen=True)
class ResizePlan:
    scale: float
    scaled_height: int
    scaled_width: int
    offset_y: int
    offset_x: int
    upscaled: bool


def resize_plan(height: int, width: int, target_side: int) -> ResizePlan:
    """Scale so the short side equals `target_side`, then center-crop."""
    if min(height, width) < 1:
        raise ValueError("image must be at least 1x1")
    short = min(height, width)
    scale = target_side / short
    sh = target_side if height == short else int(np.floor(height * scale + 0.5))
    sw = target_side if width == short else int(np.floor(width * scale + 0.5))
    sh, sw = max(sh, target_side), max(sw, target_side)
    return ResizePlan(scale, sh, sw, (sh - target_side) // 2, (sw - target_side) // 2, scale > 1)


def _keys_cubic(x, a=-0.5):
    x = np.abs(x)
    return np.where(
        x <= 1, (a + 2) * x**3 - (a + 3) * x**2 + 1,
        np.where(x < 2, a * x**3 - 5 * a * x**2 + 8 * a * x - 4 * a, 0.0))


def _triangle(x):
    return np.maximum(0.0, 1.0 - np.abs(x))


def resample_matrix(n_in: int, n_out: int, scale: float, offset: int, kernel) -> sparse.csr_matrix:
    """Sparse (n_out, n_in) interpolation matrix along one axis.

    Output sample i sits at source coordinate (i + offset + 0.5) / scale - 0.5.
    Downscaling widens the kernel by 1/scale (antialiasing); taps falling
    outside the image are clamped to the edge sample.
    """
    kernel = ResizeKernel(kernel)
    i = np.arange(n_out)
    if kernel is ResizeKernel.NEAREST:
        src = np.clip(np.floor((i + offset + 0.5) / scale).astype(np.int64), 0, n_in - 1)
        return sparse.csr_matrix((np.ones(n_out), (i, src)), shape=(n_out, n_in))
    func, support = (_triangle, 1.0) if kernel is ResizeKernel.BILINEAR else (_keys_cubic, 2.0)
    stretch = max(1.0, 1.0 / scale)
    support *= stretch
    center = (i + offset + 0.5) / scale - 0.5
    lo = np.floor(center - support).astype(np.int64) + 1
    taps = int(np.ceil(2 * support)) + 1
    idx = lo[:, None] + np.arange(taps)[None, :]
    w = func((idx - center[:, None]) / stretch)
    w /= w.sum(axis=1, keepdims=True)
    rows = np.repeat(i, taps)
    cols = np.clip(idx, 0, n_in - 1).ravel()
    m = sparse.csr_matrix((w.ravel(), (rows, cols)), shape=(n_out, n_in))
    m.sum_duplicates()
    return m


def resize_crop(img, kernel=ResizeKernel.BICUBIC, target_side: int = 1024,
                allow_upscale: bool = True, white_level: int = 65535) -> np.ndarray:
    img = np.asarray(img)
    h, w = img.shape[:2]
    plan = resize_plan(h, w, target_side)
    if plan.upscaled and not allow_upscale:
        raise ConfigurationError(
            f"{w}x{h} image would need upscaling to reach {target_side} pixels")
    if plan.scale == 1.0:
        oy, ox = plan.offset_y, plan.offset_x
        return img[oy:oy + target_side, ox:ox + target_side].copy()
    wy = resample_matrix(h, target_side, plan.scale, plan.offset_y, kernel)
    wx = resample_matrix(w, target_side, plan.scale, plan.offset_x, kernel)
    ch = img.shape[2] if img.ndim == 3 else 1
    x = img.reshape(h, w * ch).astype(np.float64)
    x = wy @ x                                              # (T, w*ch)
    x = x.reshape(target_side, w, ch).transpose(1, 0, 2).reshape(w, -1)
    x = wx @ x                                              # (T, T*ch)
    x = x.reshape(target_side, target_side, ch).transpose(1, 0, 2)
    if img.ndim == 2:
        x = x[..., 0]
    if img.dtype == np.uint8:
        return np.clip(np.floor(x + 0.5), 0, 255).astype(np.uint8)
    return _to_uint16(x, white_level)


# ---------------------------------------------------------------------------
# sharpening, denoising, micro-contrast

def _blur(img, sigma):
    return ndimage.gaussian_filter(img, sigma=(sigma, sigma, 0) if img.ndim == 3 else sigma,
                                   mode="nearest")


def unsharp_mask(img, amount: float, radius: float = USM_RADIUS, white_level: int = 65535):
    """in + amount * (in - gaussian_blur(in, radius)), clamped."""
    if amount < 0 or radius <= 0:
        raise ValueError("amount must be >= 0 and radius > 0")
    img = np.asarray(img)
    if amount == 0:
        return img.copy()
    x = img.astype(np.float64)
    return _to_uint16(x + amount * (x - _blur(x, radius)), white_level)


def _lift_forward(x, axis):
    """One 5/3 lifting step along `axis` with symmetric extension."""
    x = np.swapaxes(x, 0, axis)
    s, d = x[0::2], x[1::2]
    ns, nd = len(s), len(d)
    hi = d - 0.5 * s[:nd]
    if ns > nd:
        hi -= 0.5 * s[1:]
    else:
        hi[:-1] -= 0.5 * s[1:]
        hi[-1] -= 0.5 * s[-1]
    lo = s.copy()
    lo[:nd] += 0.25 * hi
    lo[1:] += 0.25 * hi[:ns - 1]
    lo[0] += 0.25 * hi[0]
    if ns > nd:
        lo[-1] += 0.25 * hi[-1]
    return np.swapaxes(lo, 0, axis), np.swapaxes(hi, 0, axis)


def _lift_inverse(lo, hi, axis):
    lo = np.swapaxes(lo, 0, axis)
    hi = np.swapaxes(hi, 0, axis)
    ns, nd = len(lo), len(hi)
    out = np.empty((ns + nd,) + lo.shape[1:], dtype=lo.dtype)
    s = out[0::2]
    s[...] = lo
    s[:nd] -= 0.25 * hi
    s[1:] -= 0.25 * hi[:ns - 1]
    s[0] -= 0.25 * hi[0]
    if ns > nd:
        s[-1] -= 0.25 * hi[-1]
    d = out[1::2]
    np.add(hi, 0.5 * s[:nd], out=d)
    if ns > nd:
        d += 0.5 * s[1:]
    else:
        d[:-1] += 0.5 * s[1:]
        d[-1] += 0.5 * s[-1]
    return np.swapaxes(out, 0, axis)


def wavelet_decompose(x, levels: int):
    """Separable 5/3 lifting wavelet over the last two axes.

    Returns (approximation, [(lh, hl, hh) per level, finest first]).
    """
    bands = []
    a = x
    for _ in range(levels):
        if min(a.shape[-2], a.shape[-1]) < 2:
            break
        lo, hi = _lift_forward(a, a.ndim - 2)
        ll, lh = _lift_forward(lo, a.ndim - 1)
        hl, hh = _lift_forward(hi, a.ndim - 1)
        bands.append((lh, hl, hh))
        a = ll
    return a, bands


def wavelet_reconstruct(a, bands):
    for lh, hl, hh in reversed(bands):
        lo = _lift_inverse(a, lh, a.ndim - 1)
        hi = _lift_inverse(hl, hh, a.ndim - 1)
        a = _lift_inverse(lo, hi, a.ndim - 2)
    return a


def _soft(x, t):
    mag = np.abs(x) - t
    np.maximum(mag, 0, out=mag)
    return np.copysign(mag, x, out=mag)


def _blend(shrunk, orig, keep):
    if keep == 0:
        return shrunk
    shrunk *= np.float32(1 - keep)
    shrunk += np.float32(keep) * orig
    return shrunk


# analysis filters of the lifting steps above
_LO = np.array([-1, 2, 6, 2, -1]) / 8.0
_HI = np.array([-1, 2, -1]) / 2.0


def band_noise_gains(levels: int):
    """Std gain from white pixel noise to each (lh, hl, hh) band, per level."""
    lo = np.ones(1)
    gains = []
    for j in range(levels):
        step = 2 ** j
        up_lo = np.zeros(4 * step + 1)
        up_lo[::step] = _LO
        up_hi = np.zeros(2 * step + 1)
        up_hi[::step] = _HI
        g_hi = np.linalg.norm(np.convolve(lo, up_hi))
        lo = np.convolve(lo, up_lo)
        g_lo = np.linalg.norm(lo)
        # lh: low along rows then high along columns, and so on
        gains.append((g_lo * g_hi, g_hi * g_lo, g_hi * g_hi))
    return gains


def pyramid_denoise(img, intensity: float, detail: int, white_level: int = 65535,
                    levels: int = DENOISE_LEVELS):
    """Multilevel wavelet soft-threshold denoising.

    The pixel noise sigma of each channel is the MAD / 0.6745 of the finest
    diagonal (HH) band divided by that band's noise gain; each band is
    thresholded at intensity / 10 times the noise sigma it carries, then
    blended back toward its noisy original with weight detail / 40.
    """
    if not 0 <= intensity <= 60 or not 0 <= detail <= 40:
        raise ValueError("intensity must be in [0, 60] and detail in [0, 40]")
    img = np.asarray(img)
    if intensity == 0:
        return img.copy()
    planes = img.reshape(img.shape[0], img.shape[1], -1).transpose(2, 0, 1)
    a, bands = wavelet_decompose(planes.astype(np.float32), levels)
    if not bands:
        return img.copy()
    gains = band_noise_gains(len(bands))
    hh = bands[0][2]
    sigma = np.median(np.abs(hh.reshape(hh.shape[0], -1)), axis=1) / 0.6745 / gains[0][2]
    keep = detail / 40.0
    out_bands = []
    for level, level_gains in zip(bands, gains):
        shrunk = []
        for b, g in zip(level, level_gains):
            t = (intensity / 10.0 * sigma * g).astype(np.float32)[:, None, None]
            shrunk.append(_blend(_soft(b, t), b, keep))
        out_bands.append(tuple(shrunk))
    out = wavelet_reconstruct(a, out_bands).transpose(1, 2, 0).reshape(img.shape)
    return _to_uint16(out, white_level)


def micro_contrast(img, strength: float, uniformity: int, white_level: int = 65535,
                   radius: float = MC_RADIUS):
    """Thresholded small-radius high-pass boost.

    gain = 2 * strength / 100; the high-pass residual is gated per pixel by
    |hp| / (|hp| + t) with t = uniformity * white_level / 10000, so flat,
    low-contrast areas are boosted less as uniformity grows.
    """
    if not 0 <= strength <= 100 or uniformity < 0:
        raise ValueError("strength must be in [0, 100] and uniformity >= 0")
    img = np.asarray(img)
    if strength == 0:
        return img.copy()
    x = img.astype(np.float32)
    hp = x - _blur(x, radius)
    t = uniformity * white_level / 10000.0
    gain = np.float32(2.0 * strength / 100.0)
    if t > 0:
        mag = np.abs(hp)
        hp *= mag
        mag += np.float32(t)
        hp /= mag
    hp *= gain
    x += hp
    return _to_uint16(x, white_level)


# ---------------------------------------------------------------------------
# 8-bit and grey conversion, tiling

def quantize_to_8bit(img, white_level: int = 65535) -> np.ndarray:
    """round(x * 255 / white_level), ties up, in exact integer arithmetic."""
    x = np.asarray(img)
    w = int(white_level)
    levels = np.arange(65536, dtype=np.int64)
    lut = np.clip((2 * 255 * levels + w) // (2 * w), 0, 255).astype(np.uint8)
    return lut[x.astype(np.uint16)]


def to_grey(rgb) -> np.ndarray:
    """round(0.2989 R + 0.5870 G + 0.1140 B), ties away from zero."""
    rgb = np.asarray(rgb).astype(np.int32)
    num = 2989 * rgb[..., 0] + 5870 * rgb[..., 1] + 1140 * rgb[..., 2]
    return np.clip((num + 5000) // 10000, 0, 255).astype(np.uint8)


@dataclass(frozen=True, eq=False)
class TileSet:
    parent_id: str
    tiles: tuple

    def __post_init__(self):
        if len(self.tiles) != TILE_GRID * TILE_GRID:
            raise ValueError(f"expected {TILE_GRID * TILE_GRID} tiles, got {len(self.tiles)}")
        shape = self.tiles[0].shape
        if shape[0] != shape[1] or any(t.shape != shape for t in self.tiles):
            raise ValueError("tiles must be square and share one shape")

    def __len__(self):
        return len(self.tiles)

    def __getitem__(self, k):
        return self.tiles[k]

    def reassemble(self) -> np.ndarray:
        rows = [np.concatenate(self.tiles[r * TILE_GRID:(r + 1) * TILE_GRID], axis=1)
                for r in range(TILE_GRID)]
        return np.concatenate(rows, axis=0)


def tile16(img, parent_id: str = "", side: int = 1024) -> TileSet:
    """Split a side x side image into 16 row-major tiles of side/4."""
    img = np.asarray(img)
    if img.shape[:2] != (side, side):
        raise ValueError(f"tile16 expects a {side}x{side} image, got {img.shape[1]}x{img.shape[0]}")
    t = side // TILE_GRID
    tiles = tuple(img[r * t:(r + 1) * t, c * t:(c + 1) * t].copy()
                  for r in range(TILE_GRID) for c in range(TILE_GRID))
    return TileSet(parent_id, tiles)


# ---------------------------------------------------------------------------
# pipeline

class DevelopedImage(NamedTuple):
    colour: TileSet
    grey: TileSet
    upscaled: bool
    colour_image: np.ndarray
    grey_image: np.ndarray


def _stage(name, func, *args, **kwargs):
    try:
        return func(*args, **kwargs)
    except Exception as exc:
        raise DevelopError(name, exc) from exc


def develop_image(cfa: CfaImage, recipe: DevRecipe, parent_id: str = "",
                  allow_upscale: bool = True) -> DevelopedImage:
    """Run the full development chain on one mosaic."""
    wl = cfa.white_level
    side = recipe.target_side
    x = _stage("demosaic", demosaic, cfa, recipe.demosaic)
    plan = resize_plan(cfa.height, cfa.width, side)
    x = _stage("resize_crop", resize_crop, x, recipe.resize_kernel, side,
               allow_upscale=allow_upscale, white_level=wl)
    if recipe.usm_enabled:
        x = _stage("unsharp_mask", unsharp_mask, x, recipe.usm_amount, white_level=wl)
    else:
        x = _stage("pyramid_denoise", pyramid_denoise, x, recipe.denoise_intensity,
                   recipe.denoise_detail, white_level=wl)
    if recipe.microcontrast_enabled:
        x = _stage("micro_contrast", micro_contrast, x, recipe.mc_strength,
                   recipe.mc_uniformity, white_level=wl)
    rgb8 = _stage("quantize_to_8bit", quantize_to_8bit, x, wl)
    grey = _stage("to_grey", to_grey, rgb8)
    colour_tiles = _stage("tile16", tile16, rgb8, parent_id, side)
    grey_tiles = _stage("tile16", tile16, grey, parent_id, side)
    return DevelopedImage(colour_tiles, grey_tiles, plan.upscaled, rgb8, grey)
