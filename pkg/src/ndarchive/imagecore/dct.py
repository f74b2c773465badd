"""Orthonormal 2-D DCT-II and its inverse for square rasters.

The transform matrix D has rows D[k, x] = a(k) cos(pi (2x + 1) k / 2N)
with a(0) = sqrt(1/N) and a(k>0) = sqrt(2/N); it is orthogonal, so the
inverse transform is its transpose.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ndarchive.errors import InvalidInputError
from ndarchive.imagecore.raster import ImageGray


@lru_cache(maxsize=64)
def dct_matrix(n: int) -> np.ndarray:
    k = np.arange(n, dtype=np.float64)[:, None]
    x = np.arange(n, dtype=np.float64)[None, :]
    scale = np.full((n, 1), np.sqrt(2.0 / n))
    scale[0, 0] = np.sqrt(1.0 / n)
    mat = scale * np.cos(np.pi * (2.0 * x + 1.0) * k / (2.0 * n))
    mat.flags.writeable = False
    return mat


def _require_square(arr: np.ndarray) -> np.ndarray:
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise InvalidInputError(f"DCT requires a square input, got shape {arr.shape}")
    if arr.shape[0] < 2:
        raise InvalidInputError("DCT requires side length >= 2")
    return arr


def dct2d(img: ImageGray | np.ndarray) -> np.ndarray:
    """Orthonormal 2-D DCT-II coefficients of a square image."""
    arr = img.pixels if isinstance(img, ImageGray) else np.asarray(img, dtype=np.float64)
    arr = _require_square(arr)
    d = dct_matrix(arr.shape[0])
    return d @ arr @ d.T


def idct2d(coeffs: np.ndarray) -> np.ndarray:
    """Inverse of :func:`dct2d` (exact up to float rounding)."""
    arr = _require_square(np.asarray(coeffs, dtype=np.float64))
    d = dct_matrix(arr.shape[0])
    return d.T @ arr @ d
