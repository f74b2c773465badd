"""Shared fixtures: tiny deterministic corpora and image helpers."""

from __future__ import annotations

import numpy as np
import pytest

from ndarchive import SyntheticCorpusSpec, generate_corpus, write_corpus
from ndarchive.imagecore.raster import ImageGray


def random_image(rng: np.random.Generator, size: int = 64) -> ImageGray:
    # Quantized like a decoded 8-bit file so threshold margins are honest.
    levels = rng.integers(0, 256, size=(size, size))
    return ImageGray(levels.astype(np.float64) / 255.0)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_corpus_dir(tmp_path_factory):
    """6 groups x 4 duplicates of 32px images written to disk, with manifest."""
    spec = SyntheticCorpusSpec(
        group_count=6, duplicates_per_group=4, image_size=32, seed=11
    )
    images, manifest = generate_corpus(spec)
    out = tmp_path_factory.mktemp("corpus")
    manifest_path = write_corpus(images, manifest, out)
    return out, manifest_path


@pytest.fixture(scope="session")
def small_corpus(small_corpus_dir):
    from ndarchive import ingest

    _, manifest_path = small_corpus_dir
    return ingest(manifest_path)
