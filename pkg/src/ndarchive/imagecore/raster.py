"""Grayscale raster type, color conversion, resampling, and file IO.

All pixel math is done in float64 on intensities in [0, 1]. Resampling
offers two methods: ``area`` (box filter, the stable choice before
hashing) and ``bilinear`` (half-pixel-center convention, used by the
augmentation paths).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from PIL import Image

from ndarchive.errors import InvalidInputError

# ITU-R BT.601 luminance weights.
GRAY_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class ImageGray:
    """Decoded grayscale raster: float intensities in [0, 1], row-major.

    ``pixels`` has shape (height, width). The array is copied on
    construction and frozen, so instances can be shared freely across
    threads.
    """

    pixels: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.pixels, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InvalidInputError(f"expected a 2-D raster, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("raster contains non-finite intensities")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise InvalidInputError("raster intensities must lie in [0, 1]")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "pixels", arr)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def data(self) -> np.ndarray:
        """Row-major flat view, length ``width * height``."""
        return self.pixels.reshape(-1)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ImageGray):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(
            np.array_equal(self.pixels, other.pixels)
        )

    def __hash__(self):
        return hash((self.pixels.shape, self.pixels.tobytes()))


def to_grayscale(rgb_image: np.ndarray) -> ImageGray:
    """Convert an interleaved 8-bit RGB raster to a grayscale image.

    Luminance is (0.299 R + 0.587 G + 0.114 B) / 255, clamped to [0, 1].
    """
    arr = np.asarray(rgb_image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise InvalidInputError(f"expected an (h, w, 3) RGB raster, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidInputError("RGB raster has a zero dimension")
    r, g, b = (arr[:, :, c].astype(np.float64) for c in range(3))
    wr, wg, wb = GRAY_WEIGHTS
    lum = (wr * r + wg * g + wb * b) / 255.0
    return ImageGray(np.clip(lum, 0.0, 1.0))


@lru_cache(maxsize=128)
def _area_weights(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) row-stochastic matrix of box-filter overlap weights.

    Output pixel i covers the source interval [i*s, (i+1)*s) with
    s = n_in / n_out; each source pixel contributes its covered length.
    Rows sum to 1, so integral scale factors average source cells exactly.
    """
    s = n_in / n_out
    lo = np.arange(n_out, dtype=np.float64)[:, None] * s
    hi = lo + s
    src_lo = np.arange(n_in, dtype=np.float64)[None, :]
    overlap = np.minimum(hi, src_lo + 1.0) - np.maximum(lo, src_lo)
    w = np.clip(overlap, 0.0, None) / s
    w.flags.writeable = False
    return w


def _bilinear_axis(n_in: int, n_out: int, window_lo: float, window_len: float):
    """Neighbor indices and weights for half-pixel-center bilinear sampling.

    Maps output pixel centers into the source window
    [window_lo, window_lo + window_len); coordinates are clamped to the
    valid source range so edges replicate.
    """
    centers = window_lo + (np.arange(n_out, dtype=np.float64) + 0.5) * (window_len / n_out) - 0.5
    centers = np.clip(centers, 0.0, n_in - 1.0)
    i0 = np.floor(centers).astype(np.intp)
    i0 = np.minimum(i0, n_in - 2) if n_in > 1 else np.zeros_like(i0)
    frac = centers - i0
    return i0, frac


def _bilinear_window(
    pixels: np.ndarray,
    window: tuple[float, float, float, float],
    out_w: int,
    out_h: int,
) -> np.ndarray:
    """Bilinearly sample a (possibly fractional) source window to out_h x out_w."""
    h, w = pixels.shape
    x0, y0, win_w, win_h = window
    jx, fx = _bilinear_axis(w, out_w, x0, win_w)
    iy, fy = _bilinear_axis(h, out_h, y0, win_h)
    jx1 = np.minimum(jx + 1, w - 1)
    iy1 = np.minimum(iy + 1, h - 1)
    tl = pixels[np.ix_(iy, jx)]
    tr = pixels[np.ix_(iy, jx1)]
    bl = pixels[np.ix_(iy1, jx)]
    br = pixels[np.ix_(iy1, jx1)]
    top = tl + (tr - tl) * fx[None, :]
    bot = bl + (br - bl) * fx[None, :]
    return top + (bot - top) * fy[:, None]


def resize(img: ImageGray, out_w: int, out_h: int, method: str = "area") -> ImageGray:
    """Resample ``img`` to out_w x out_h using ``area`` or ``bilinear``."""
    if out_w < 1 or out_h < 1:
        raise InvalidInputError(f"target dimensions must be >= 1, got {out_w}x{out_h}")
    if method == "area":
        wr = _area_weights(img.height, out_h)
        wc = _area_weights(img.width, out_w)
        out = wr @ img.pixels @ wc.T
    elif method == "bilinear":
        out = _bilinear_window(img.pixels, (0.0, 0.0, float(img.width), float(img.height)), out_w, out_h)
    else:
        raise InvalidInputError(f"unknown resize method {method!r}")
    return ImageGray(np.clip(out, 0.0, 1.0))


def crop_resize(img: ImageGray, x0: float, y0: float, crop_w: float, crop_h: float,
                out_w: int, out_h: int) -> ImageGray:
    """Bilinearly resample the window at (x0, y0) of size crop_w x crop_h."""
    if crop_w <= 0 or crop_h <= 0:
        raise InvalidInputError("crop window must have positive size")
    if out_w < 1 or out_h < 1:
        raise InvalidInputError("target dimensions must be >= 1")
    out = _bilinear_window(img.pixels, (x0, y0, crop_w, crop_h), out_w, out_h)
    return ImageGray(np.clip(out, 0.0, 1.0))


def load_image(path: str | Path) -> ImageGray:
    """Decode a PNG or JPEG file to grayscale."""
    with Image.open(path) as im:
        rgb = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return to_grayscale(rgb)


def save_png(img: ImageGray, path: str | Path) -> None:
    """Write an 8-bit grayscale PNG (round-half-up quantization)."""
    q = np.floor(img.pixels * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(q, mode="L").save(path, format="PNG")
