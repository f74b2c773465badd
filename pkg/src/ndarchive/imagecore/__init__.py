"""Image decoding, resampling, DCT, augmentation, and synthetic corpora."""

from ndarchive.imagecore.augment import KINDS, AugmentationSpec, augment, augment_chain
from ndarchive.imagecore.dct import dct2d, dct_matrix, idct2d
from ndarchive.imagecore.raster import (
    GRAY_WEIGHTS,
    ImageGray,
    crop_resize,
    load_image,
    resize,
    save_png,
    to_grayscale,
)
from ndarchive.imagecore.synth import SyntheticCorpusSpec, generate_corpus, write_corpus

__all__ = [
    "AugmentationSpec",
    "GRAY_WEIGHTS",
    "ImageGray",
    "KINDS",
    "SyntheticCorpusSpec",
    "augment",
    "augment_chain",
    "crop_resize",
    "dct2d",
    "dct_matrix",
    "generate_corpus",
    "idct2d",
    "load_image",
    "resize",
    "save_png",
    "to_grayscale",
    "write_corpus",
]
