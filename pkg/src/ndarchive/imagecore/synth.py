"""Synthetic corpus generator: grouped near-duplicates at desk scale.

Base images are compositions of 2-5 random rectangles, ellipses, and
linear gradients over a gradient background, plus low-amplitude noise.
Each group holds the base image plus augmented variants whose transform
strength is selectable: exact copies, mild (hashing should mostly
survive), or strong crops-and-blur (hashing should degrade).

Splits partition *groups*, never individual images, so near-duplicates
never straddle train/test.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ndarchive.errors import InvalidInputError
from ndarchive.imagecore.augment import AugmentationSpec, augment_chain
from ndarchive.imagecore.raster import ImageGray, save_png
from ndarchive.manifest import CorpusManifest, ManifestRecord, save_manifest

STRENGTHS = ("none", "mild", "strong")

# Variant transform ranges per strength level.
_VARIANT_PARAMS = {
    "mild": {
        "crop": {"scale_min": 0.85, "scale_max": 1.0},
        "color": {"brightness": 0.08, "contrast": 0.08, "gamma_min": 0.92, "gamma_max": 1.08},
        "blur": {"sigma_min": 0.3, "sigma_max": 0.7},
    },
    "strong": {
        "crop": {"scale_min": 0.45, "scale_max": 0.75},
        "color": {"brightness": 0.2, "contrast": 0.2, "gamma_min": 0.75, "gamma_max": 1.3},
        "blur": {"sigma_min": 1.0, "sigma_max": 2.2},
    },
}


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    group_count: int
    duplicates_per_group: int = 4
    image_size: int = 64
    split_fractions: tuple[float, float, float] = (0.6, 0.2, 0.2)
    variant_strength: str = "mild"
    seed: int = 0

    def __post_init__(self):
        if self.group_count < 1:
            raise InvalidInputError("group_count must be >= 1")
        if self.duplicates_per_group < 1:
            raise InvalidInputError("duplicates_per_group must be >= 1")
        if self.image_size < 8:
            raise InvalidInputError("image_size must be >= 8")
        if abs(sum(self.split_fractions) - 1.0) > 1e-9:
            raise InvalidInputError("split fractions must sum to 1")
        if any(f < 0 for f in self.split_fractions):
            raise InvalidInputError("split fractions must be non-negative")
        if self.variant_strength not in STRENGTHS:
            raise InvalidInputError(f"unknown variant strength {self.variant_strength!r}")


def _background(size: int, rng: np.random.Generator) -> np.ndarray:
    theta = rng.uniform(0.0, 2.0 * np.pi)
    lo, hi = sorted(rng.uniform(0.1, 0.9, size=2))
    y, x = np.mgrid[0:size, 0:size].astype(np.float64) / max(size - 1, 1)
    ramp = np.cos(theta) * x + np.sin(theta) * y
    ramp = (ramp - ramp.min()) / max(ramp.max() - ramp.min(), 1e-12)
    return lo + ramp * (hi - lo)


def _paint_rectangle(canvas: np.ndarray, rng: np.random.Generator) -> None:
    size = canvas.shape[0]
    w = rng.uniform(0.15, 0.6) * size
    h = rng.uniform(0.15, 0.6) * size
    x0 = rng.uniform(0, size - w)
    y0 = rng.uniform(0, size - h)
    value = rng.uniform(0.0, 1.0)
    alpha = rng.uniform(0.6, 1.0)
    r0, r1 = int(round(y0)), int(round(y0 + h))
    c0, c1 = int(round(x0)), int(round(x0 + w))
    region = canvas[r0:r1, c0:c1]
    region *= 1.0 - alpha
    region += alpha * value


def _paint_ellipse(canvas: np.ndarray, rng: np.random.Generator) -> None:
    size = canvas.shape[0]
    cx = rng.uniform(0.2, 0.8) * size
    cy = rng.uniform(0.2, 0.8) * size
    rx = rng.uniform(0.1, 0.35) * size
    ry = rng.uniform(0.1, 0.35) * size
    value = rng.uniform(0.0, 1.0)
    alpha = rng.uniform(0.6, 1.0)
    y, x = np.mgrid[0:size, 0:size].astype(np.float64)
    mask = ((x - cx) / rx) ** 2 + ((y - cy) / ry) ** 2 <= 1.0
    canvas[mask] = (1.0 - alpha) * canvas[mask] + alpha * value


def _paint_gradient(canvas: np.ndarray, rng: np.random.Generator) -> None:
    size = canvas.shape[0]
    theta = rng.uniform(0.0, 2.0 * np.pi)
    alpha = rng.uniform(0.25, 0.6)
    y, x = np.mgrid[0:size, 0:size].astype(np.float64) / max(size - 1, 1)
    ramp = np.cos(theta) * x + np.sin(theta) * y
    ramp = (ramp - ramp.min()) / max(ramp.max() - ramp.min(), 1e-12)
    canvas *= 1.0 - alpha
    canvas += alpha * ramp


_PAINTERS = (_paint_rectangle, _paint_ellipse, _paint_gradient)


def _base_image(size: int, rng: np.random.Generator) -> ImageGray:
    canvas = _background(size, rng)
    for _ in range(int(rng.integers(2, 6))):
        painter = _PAINTERS[int(rng.integers(0, len(_PAINTERS)))]
        painter(canvas, rng)
    canvas += rng.normal(0.0, 0.015, size=canvas.shape)
    return ImageGray(np.clip(canvas, 0.0, 1.0))


def _variant(base: ImageGray, strength: str, rng: np.random.Generator) -> ImageGray:
    if strength == "none":
        return base
    p = _VARIANT_PARAMS[strength]
    seeds = rng.integers(0, 2**63 - 1, size=3)
    chain = [
        AugmentationSpec("crop-and-resize", p["crop"], seed=int(seeds[0])),
        AugmentationSpec("color-distortion", p["color"], seed=int(seeds[1])),
        AugmentationSpec("gaussian-blur", p["blur"], seed=int(seeds[2])),
    ]
    return augment_chain(base, chain)


def _split_counts(group_count: int, fractions: tuple[float, float, float]) -> list[int]:
    # Largest-remainder apportionment; earlier splits win ties.
    raw = [group_count * f for f in fractions]
    counts = [int(np.floor(v)) for v in raw]
    remainders = [v - c for v, c in zip(raw, counts)]
    for _ in range(group_count - sum(counts)):
        i = int(np.argmax(remainders))
        counts[i] += 1
        remainders[i] = -1.0
    return counts


def generate_corpus(spec: SyntheticCorpusSpec) -> tuple[list[ImageGray], CorpusManifest]:
    """Generate grouped near-duplicate images; pure function of the spec."""
    rng = np.random.default_rng(spec.seed)
    n_train, n_val, _ = _split_counts(spec.group_count, spec.split_fractions)

    images: list[ImageGray] = []
    records: list[ManifestRecord] = []
    for group in range(spec.group_count):
        if group < n_train:
            split = "train"
        elif group < n_train + n_val:
            split = "val"
        else:
            split = "test"
        base = _base_image(spec.image_size, rng)
        for member in range(spec.duplicates_per_group):
            img = base if member == 0 else _variant(base, spec.variant_strength, rng)
            image_id = f"g{group:04d}/img_{member}.png"
            images.append(img)
            records.append(ManifestRecord(image_id, image_id, group, split))
    return images, CorpusManifest(records)


def write_corpus(images: list[ImageGray], manifest: CorpusManifest, out_dir: str | Path) -> Path:
    """Write PNGs plus ``manifest.tsv`` under ``out_dir``; returns the manifest path."""
    out = Path(out_dir)
    for img, rec in zip(images, manifest.records):
        target = out / rec.path
        target.parent.mkdir(parents=True, exist_ok=True)
        save_png(img, target)
    manifest_path = out / "manifest.tsv"
    save_manifest(manifest, manifest_path)
    return manifest_path
