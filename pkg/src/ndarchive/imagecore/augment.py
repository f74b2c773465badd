"""Seeded augmentation primitives for building near-duplicate views.

Five kinds mirror the classic two-view contrastive recipe: horizontal
flip, crop-and-resize, color distortion (brightness/contrast/gamma on
grayscale intensities), grayscale jitter, and Gaussian blur. Every
augmentation is a pure function of (image, spec): the spec's seed fully
determines the sampled parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from ndarchive.errors import InvalidInputError
from ndarchive.imagecore.raster import ImageGray, crop_resize

KINDS = ("horizontal-flip", "crop-and-resize", "color-distortion",
         "grayscale-jitter", "gaussian-blur")

# Parameter defaults, per kind. Ranges are sampled uniformly.
_DEFAULTS: dict[str, dict[str, float]] = {
    "horizontal-flip": {"probability": 1.0},
    "crop-and-resize": {"scale_min": 0.6, "scale_max": 1.0},
    "color-distortion": {"brightness": 0.2, "contrast": 0.2,
                         "gamma_min": 0.8, "gamma_max": 1.25},
    "grayscale-jitter": {"probability": 0.2},
    "gaussian-blur": {"sigma_min": 0.5, "sigma_max": 1.5},
}


@dataclass(frozen=True)
class AugmentationSpec:
    """One augmentation step: a kind, its numeric parameters, and a seed."""

    kind: str
    parameters: dict[str, float] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown augmentation kind {self.kind!r}")
        params = dict(_DEFAULTS[self.kind])
        unknown = set(self.parameters) - set(params)
        if unknown:
            raise InvalidInputError(f"unknown parameters for {self.kind}: {sorted(unknown)}")
        params.update(self.parameters)
        _validate_params(self.kind, params)
        object.__setattr__(self, "parameters", params)


def _validate_params(kind: str, p: dict[str, float]) -> None:
    if kind == "crop-and-resize":
        if not (0.0 < p["scale_min"] <= p["scale_max"] <= 1.0):
            raise InvalidInputError("crop scale range must lie within (0, 1]")
    elif kind == "gaussian-blur":
        if not (0.0 < p["sigma_min"] <= p["sigma_max"]):
            raise InvalidInputError("blur sigma range must be positive")
    elif kind == "color-distortion":
        if p["brightness"] < 0 or p["contrast"] < 0:
            raise InvalidInputError("distortion strengths must be >= 0")
        if not (0.0 < p["gamma_min"] <= p["gamma_max"]):
            raise InvalidInputError("gamma range must be positive")
    elif kind in ("horizontal-flip", "grayscale-jitter"):
        if not (0.0 <= p["probability"] <= 1.0):
            raise InvalidInputError("probability must lie in [0, 1]")


def _flip(img: ImageGray, p: dict[str, float], rng: np.random.Generator) -> ImageGray:
    if rng.random() < p["probability"]:
        return ImageGray(img.pixels[:, ::-1])
    return img


def _crop_and_resize(img: ImageGray, p: dict[str, float], rng: np.random.Generator) -> ImageGray:
    scale = rng.uniform(p["scale_min"], p["scale_max"])
    crop_w = img.width * scale
    crop_h = img.height * scale
    x0 = rng.uniform(0.0, img.width - crop_w)
    y0 = rng.uniform(0.0, img.height - crop_h)
    return crop_resize(img, x0, y0, crop_w, crop_h, img.width, img.height)


def _color_distortion(img: ImageGray, p: dict[str, float], rng: np.random.Generator) -> ImageGray:
    # Sampling order is fixed: brightness, contrast, gamma.
    shift = rng.uniform(-p["brightness"], p["brightness"])
    gain = rng.uniform(1.0 - p["contrast"], 1.0 + p["contrast"])
    gamma = rng.uniform(p["gamma_min"], p["gamma_max"])
    x = img.pixels + shift
    mean = x.mean()
    x = (x - mean) * gain + mean
    x = np.clip(x, 0.0, 1.0) ** gamma
    return ImageGray(np.clip(x, 0.0, 1.0))


def _grayscale_jitter(img: ImageGray, p: dict[str, float], rng: np.random.Generator) -> ImageGray:
    # Desaturation of a single-channel raster is the identity; the draw is
    # kept so seeds stay aligned with multi-step pipelines.
    rng.random()
    return img


def _gaussian_blur(img: ImageGray, p: dict[str, float], rng: np.random.Generator) -> ImageGray:
    sigma = rng.uniform(p["sigma_min"], p["sigma_max"])
    out = gaussian_filter(img.pixels, sigma=sigma, mode="nearest")
    return ImageGray(np.clip(out, 0.0, 1.0))


_APPLY = {
    "horizontal-flip": _flip,
    "crop-and-resize": _crop_and_resize,
    "color-distortion": _color_distortion,
    "grayscale-jitter": _grayscale_jitter,
    "gaussian-blur": _gaussian_blur,
}


def augment(img: ImageGray, spec: AugmentationSpec) -> ImageGray:
    """Apply one augmentation; deterministic given (img, spec.seed)."""
    rng = np.random.default_rng(spec.seed)
    out = _APPLY[spec.kind](img, spec.parameters, rng)
    if out.pixels.shape != img.pixels.shape:
        raise AssertionError("augmentation changed image dimensions")
    return out


def augment_chain(img: ImageGray, specs: list[AugmentationSpec]) -> ImageGray:
    for spec in specs:
        img = augment(img, spec)
    return img
