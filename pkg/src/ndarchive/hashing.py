"""Hand-crafted perceptual hashes: average, DCT (phash), and block-mean.

All three follow the same shape: downscale with the area filter,
quantize to 8-bit integer levels, derive a per-cell statistic, threshold
it, and emit a fixed-length bit vector. Thresholding is strict ``>``
everywhere, so ties map to 0; the integer quantization is what makes a
tie an exact float equality rather than a summation-order coin flip.
Bits are row-major; serialized hex packs them most-significant-bit
first.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ndarchive.errors import IncomparableHashError, InvalidInputError
from ndarchive.imagecore.dct import dct2d
from ndarchive.imagecore.raster import ImageGray, resize

ALGORITHMS = ("average", "phash", "blockmean")
HASH_BITS = {"average": 64, "phash": 64, "blockmean": 256}

# phash thresholding convention (the dominant open-source one): the
# threshold is the median of the 8x8 low-frequency block, DC included.
# The alternative convention (mean, DC excluded) stays testable through
# the keyword arguments of :func:`phash`.
PHASH_THRESHOLD_STAT = "median"
PHASH_INCLUDE_DC = True

_BLOCKMEAN_RESIZE = 256
_BLOCKMEAN_GRID = 16

# Statistics run on 8-bit integer levels (the precision these algorithms were
# designed around). Means and medians of integers are exact dyadic rationals
# in float64, so threshold ties are genuine ties and cannot flip with the
# summation order. The DCT path cannot be made exact (irrational basis), so
# coefficients within PHASH_TIE_EPS of the threshold count as ties instead;
# transform round-off is ~1e-10 in level units, real coefficient gaps are
# orders of magnitude above this.
PHASH_TIE_EPS = 1e-6


def _quantized_levels(img: ImageGray, size: int) -> np.ndarray:
    """Area-downscale and round to integer levels in [0, 255]."""
    small = resize(img, size, size, method="area").pixels
    return np.floor(small * 255.0 + 0.5)


@dataclass(frozen=True)
class PerceptualHash:
    """Fixed-length bit vector with an algorithm tag.

    ``bits`` is a read-only uint8 array of 0/1 values whose length is
    fixed by the algorithm (64 for average/phash, 256 for blockmean).
    """

    algorithm: str
    bits: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise InvalidInputError(f"unknown hash algorithm {self.algorithm!r}")
        arr = np.asarray(self.bits, dtype=np.uint8)
        expected = HASH_BITS[self.algorithm]
        if arr.ndim != 1 or arr.size != expected:
            raise InvalidInputError(
                f"{self.algorithm} hash needs {expected} bits, got shape {arr.shape}"
            )
        if not np.all((arr == 0) | (arr == 1)):
            raise InvalidInputError("hash bits must be 0 or 1")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "bits", arr)

    def to_hex(self) -> str:
        return bytes(np.packbits(self.bits)).hex()

    def __str__(self) -> str:
        return f"{self.algorithm}:{self.to_hex()}"

    def __eq__(self, other) -> bool:
        if not isinstance(other, PerceptualHash):
            return NotImplemented
        return self.algorithm == other.algorithm and bool(np.array_equal(self.bits, other.bits))

    def __hash__(self):
        return hash((self.algorithm, self.bits.tobytes()))


def parse_hash(text: str) -> PerceptualHash:
    """Parse the ``algorithm:hex`` serialization."""
    algorithm, _, hexpart = text.partition(":")
    if algorithm not in ALGORITHMS or not hexpart:
        raise InvalidInputError(f"malformed hash string {text!r}")
    expected = HASH_BITS[algorithm] // 4
    if len(hexpart) != expected:
        raise InvalidInputError(
            f"{algorithm} hash needs {expected} hex chars, got {len(hexpart)}"
        )
    raw = np.frombuffer(bytes.fromhex(hexpart), dtype=np.uint8)
    return PerceptualHash(algorithm, np.unpackbits(raw))


def average_hash(img: ImageGray) -> PerceptualHash:
    """64-bit hash: 8x8 area downscale, bit set iff pixel > mean."""
    levels = _quantized_levels(img, 8)
    mean = levels.sum() / 64.0
    bits = (levels > mean).astype(np.uint8).reshape(-1)
    return PerceptualHash("average", bits)


def phash(
    img: ImageGray,
    threshold_stat: str = PHASH_THRESHOLD_STAT,
    include_dc: bool = PHASH_INCLUDE_DC,
) -> PerceptualHash:
    """64-bit DCT hash: 32x32 area downscale, top-left 8x8 coefficients,
    bit set iff coefficient > threshold (median over the block by default)."""
    levels = _quantized_levels(img, 32)
    block = dct2d(levels)[:8, :8]
    flat = block.reshape(-1)
    pool = flat if include_dc else flat[1:]
    if threshold_stat == "median":
        threshold = float(np.median(pool))
    elif threshold_stat == "mean":
        threshold = float(pool.mean())
    else:
        raise InvalidInputError(f"unknown threshold statistic {threshold_stat!r}")
    bits = (flat - threshold > PHASH_TIE_EPS).astype(np.uint8)
    return PerceptualHash("phash", bits)


def blockmean_hash(img: ImageGray) -> PerceptualHash:
    """256-bit hash: 256x256 area downscale, 16x16 grid of block means,
    bit set iff block mean > median of block means."""
    n, g = _BLOCKMEAN_RESIZE, _BLOCKMEAN_GRID
    levels = _quantized_levels(img, n)
    blocks = levels.reshape(g, n // g, g, n // g).sum(axis=(1, 3)) / (n // g) ** 2
    flat = blocks.reshape(-1)
    threshold = float(np.median(flat))
    return PerceptualHash("blockmean", (flat > threshold).astype(np.uint8))


def compute_hash(img: ImageGray, algorithm: str) -> PerceptualHash:
    if algorithm == "average":
        return average_hash(img)
    if algorithm == "phash":
        return phash(img)
    if algorithm == "blockmean":
        return blockmean_hash(img)
    raise InvalidInputError(f"unknown hash algorithm {algorithm!r}")


def hamming(a: PerceptualHash, b: PerceptualHash) -> tuple[int, float]:
    """(raw popcount of XOR, distance normalized by bit length)."""
    if a.algorithm != b.algorithm:
        raise IncomparableHashError(
            f"cannot compare {a.algorithm} hash with {b.algorithm} hash"
        )
    raw = int(np.count_nonzero(a.bits != b.bits))
    return raw, raw / a.bits.size
