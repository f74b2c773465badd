"""Training loops over the toy encoder.

Four modes share one epoch driver: contrastive training on two
independently augmented views per image, masked-patch reconstruction,
and the two supervised objectives (group-id classification and triplet
ranking). Every loop is single-threaded and fully determined by the
config seed; input parameters are never mutated, trained copies are
returned.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

from ndarchive.errors import InvalidInputError
from ndarchive.imagecore.augment import AugmentationSpec, augment_chain
from ndarchive.imagecore.raster import ImageGray
from ndarchive.losses import cross_entropy_tensor, nt_xent_tensor, triplet_tensor
from ndarchive.neuralcore.autodiff import Tensor, as_tensor, parameter, zero_grads
from ndarchive.neuralcore.encoder import (
    EncoderSpec,
    encode_batch,
    init_classifier_head,
    mae_forward_tensor,
    make_mask_plan,
)
from ndarchive.neuralcore.optim import adam_step, decayed_lr, init_adam_state

MODES = ("cross-entropy", "triplet", "simclr", "mae")

# One view = this five-step chain, each step freshly seeded. Ranges are
# kept mild so a view stays a near-duplicate of its source: a small MLP
# over raw pixels has no translation or mirror structure to absorb heavy
# crops or frequent flips, and demanding those invariances makes it
# discard exactly the pixel detail that separates one source from another.
VIEW_PIPELINE: tuple[tuple[str, dict[str, float]], ...] = (
    ("horizontal-flip", {"probability": 0.05}),
    ("crop-and-resize", {"scale_min": 0.85, "scale_max": 1.0}),
    ("color-distortion", {"brightness": 0.08, "contrast": 0.08,
                          "gamma_min": 0.92, "gamma_max": 1.08}),
    ("grayscale-jitter", {}),
    ("gaussian-blur", {"sigma_min": 0.3, "sigma_max": 0.7}),
)


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings shared by all training modes."""

    mode: str
    epochs: int
    batch_size: int
    lr: float = 3e-4
    lr_decay: float = 0.1
    decay_every: int = 8
    temperature: float = 0.5
    margin: float = 0.2
    mask_ratio: float = 0.75
    seed: int = 0
    mae_loss_scope: str = "masked"

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidInputError(f"unknown training mode {self.mode!r}")
        if self.epochs < 0:
            raise InvalidInputError("epochs must be >= 0")
        min_batch = 2 if self.mode == "simclr" else 1
        if self.batch_size < min_batch:
            raise InvalidInputError(
                f"batch_size must be >= {min_batch} for {self.mode} training"
            )
        if self.lr <= 0 or not (0.0 < self.lr_decay <= 1.0) or self.decay_every < 1:
            raise InvalidInputError("learning-rate schedule parameters out of range")
        if self.temperature <= 0:
            raise InvalidInputError("temperature must be > 0")
        if self.margin < 0:
            raise InvalidInputError("margin must be >= 0")
        if not (0.0 < self.mask_ratio < 1.0):
            raise InvalidInputError("mask_ratio must lie strictly between 0 and 1")
        if self.mae_loss_scope not in ("masked", "all"):
            raise InvalidInputError(f"unknown mae_loss_scope {self.mae_loss_scope!r}")


@dataclass(frozen=True)
class EpochTrace:
    epoch: int
    loss: float
    lr: float


def save_trace(path, trace: Sequence[EpochTrace]) -> None:
    """Write a loss trace as CSV with header epoch,loss,lr."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "lr"])
        for row in trace:
            writer.writerow([row.epoch, repr(row.loss), repr(row.lr)])


def load_trace(path) -> list[EpochTrace]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["epoch", "loss", "lr"]:
            raise InvalidInputError(f"unexpected trace header {header!r}")
        return [EpochTrace(int(e), float(l), float(r)) for e, l, r in reader]


def view_augmentations(rng: np.random.Generator) -> list[AugmentationSpec]:
    """One independently seeded augmentation chain for a single view."""
    return [
        AugmentationSpec(kind, dict(overrides), seed=int(rng.integers(0, 2**63)))
        for kind, overrides in VIEW_PIPELINE
    ]


def two_views(img: ImageGray, rng: np.random.Generator) -> tuple[ImageGray, ImageGray]:
    """Two independently augmented views of one image."""
    first = augment_chain(img, view_augmentations(rng))
    second = augment_chain(img, view_augmentations(rng))
    return first, second


def _copy_params(params: dict[str, Tensor]) -> dict[str, Tensor]:
    return {name: parameter(t.values) for name, t in params.items()}


def _flatten(images: Sequence[ImageGray]) -> Tensor:
    return as_tensor(np.stack([img.data.reshape(-1) for img in images]))


def _batches(order: np.ndarray, size: int) -> Iterator[np.ndarray]:
    for start in range(0, len(order), size):
        yield order[start : start + size]


def _check_corpus(images: Sequence[ImageGray], spec: EncoderSpec) -> None:
    if not images:
        raise InvalidInputError("training corpus is empty")
    for img in images:
        if img.width != spec.input_size or img.height != spec.input_size:
            raise InvalidInputError(
                f"corpus image is {img.width}x{img.height}, encoder expects "
                f"{spec.input_size}x{spec.input_size}"
            )


def _require_mode(config: TrainConfig, mode: str) -> None:
    if config.mode != mode:
        raise InvalidInputError(f"config mode is {config.mode!r}, expected {mode!r}")


def _train(
    n_items: int,
    trained: dict[str, Tensor],
    config: TrainConfig,
    batch_loss: Callable[[np.ndarray, np.random.Generator], Tensor],
) -> tuple[dict[str, Tensor], list[EpochTrace]]:
    """Shared epoch driver: shuffle, batch loss, backward, Adam step."""
    state = init_adam_state(trained)
    rng = np.random.default_rng(config.seed)
    trace: list[EpochTrace] = []
    for epoch in range(config.epochs):
        lr = decayed_lr(config.lr, epoch, config.lr_decay, config.decay_every)
        order = rng.permutation(n_items)
        losses = []
        for batch in _batches(order, config.batch_size):
            loss = batch_loss(batch, rng)
            zero_grads(trained.values())
            loss.backward()
            adam_step(trained, state, lr)
            losses.append(loss.item())
        trace.append(EpochTrace(epoch, float(np.mean(losses)), lr))
    return trained, trace


def simclr_train(
    images: Sequence[ImageGray],
    params: dict[str, Tensor],
    spec: EncoderSpec,
    config: TrainConfig,
) -> tuple[dict[str, Tensor], list[EpochTrace]]:
    """Contrastive training: attract the two views of each image, repel the rest.

    Each epoch reshuffles the corpus and re-augments every image into a
    fresh view pair; the loss is computed on the unit-norm projections.
    No labels are consumed.
    """
    _require_mode(config, "simclr")
    _check_corpus(images, spec)
    trained = _copy_params(params)

    def batch_loss(batch: np.ndarray, rng: np.random.Generator) -> Tensor:
        views: list[ImageGray] = []
        for idx in batch:
            first, second = two_views(images[idx], rng)
            views.append(first)
            views.append(second)
        _, z = encode_batch(_flatten(views), trained, spec)
        return nt_xent_tensor(z, config.temperature)

    return _train(len(images), trained, config, batch_loss)


def mae_train(
    images: Sequence[ImageGray],
    params: dict[str, Tensor],
    spec: EncoderSpec,
    config: TrainConfig,
) -> tuple[dict[str, Tensor], list[EpochTrace]]:
    """Masked-reconstruction training with a fresh per-image mask each pass."""
    _require_mode(config, "mae")
    _check_corpus(images, spec)
    trained = _copy_params(params)

    def batch_loss(batch: np.ndarray, rng: np.random.Generator) -> Tensor:
        total: Tensor | None = None
        for idx in batch:
            plan = make_mask_plan(spec.patch_count, config.mask_ratio, rng)
            _, loss = mae_forward_tensor(
                images[idx], plan, trained, spec, config.mae_loss_scope
            )
            total = loss if total is None else total + loss
        return total / float(len(batch))

    return _train(len(images), trained, config, batch_loss)


def class_order(group_ids: Sequence[str]) -> tuple[str, ...]:
    """Distinct group ids in sorted order; position = classifier class index."""
    return tuple(sorted(set(group_ids)))


def sample_triplet(
    group_ids: Sequence[str], anchor: int, rng: np.random.Generator
) -> tuple[int, int, int]:
    """Draw (anchor, positive, negative) indices for one anchor image.

    The positive is a uniform draw from the anchor's group (excluding the
    anchor itself), the negative a uniform draw over every image outside
    that group.
    """
    group = group_ids[anchor]
    positives = [i for i, g in enumerate(group_ids) if g == group and i != anchor]
    negatives = [i for i, g in enumerate(group_ids) if g != group]
    if not positives:
        raise InvalidInputError(f"group {group!r} has no second member for anchor {anchor}")
    if not negatives:
        raise InvalidInputError("triplet sampling needs at least two groups")
    return (
        anchor,
        positives[int(rng.integers(len(positives)))],
        negatives[int(rng.integers(len(negatives)))],
    )


def supervised_train(
    images: Sequence[ImageGray],
    group_ids: Sequence[str],
    params: dict[str, Tensor],
    spec: EncoderSpec,
    config: TrainConfig,
) -> tuple[dict[str, Tensor], list[EpochTrace]]:
    """Label-consuming training: groups as classes, or triplet ranking.

    Cross-entropy mode attaches a linear head over the representation
    (initialized from the config seed when absent from ``params``) and
    minimizes categorical cross-entropy of group membership. Triplet
    mode needs no head: it samples one triplet per eligible anchor and
    ranks squared distances between unnormalized representations.
    """
    if config.mode not in ("cross-entropy", "triplet"):
        raise InvalidInputError(f"supervised_train cannot run mode {config.mode!r}")
    _check_corpus(images, spec)
    if len(group_ids) != len(images):
        raise InvalidInputError("need exactly one group id per image")
    if any(g is None for g in group_ids):
        raise InvalidInputError("every supervised training image needs a group id")

    classes = class_order(group_ids)
    trained = _copy_params(params)

    if config.mode == "cross-entropy":
        if len(classes) < 2:
            raise InvalidInputError("classification needs at least two groups")
        index_of = {g: c for c, g in enumerate(classes)}
        labels = np.array([index_of[g] for g in group_ids], dtype=np.intp)
        if "head.w" not in trained:
            trained.update(init_classifier_head(spec, len(classes), config.seed))
        elif trained["head.w"].shape != (spec.repr_dim, len(classes)):
            raise InvalidInputError(
                f"classifier head is {trained['head.w'].shape}, corpus has "
                f"{len(classes)} groups"
            )

        def batch_loss(batch: np.ndarray, rng: np.random.Generator) -> Tensor:
            h, _ = encode_batch(_flatten([images[i] for i in batch]), trained, spec)
            logits = h @ trained["head.w"] + trained["head.b"]
            return cross_entropy_tensor(logits, labels[batch])

        return _train(len(images), trained, config, batch_loss)

    # triplet mode: anchors are the images whose group has a second member
    members: dict[str, list[int]] = {}
    for i, g in enumerate(group_ids):
        members.setdefault(g, []).append(i)
    anchors = [i for i, g in enumerate(group_ids) if len(members[g]) >= 2]
    if not anchors:
        raise InvalidInputError("no group has two members; cannot form triplets")
    if len(classes) < 2:
        raise InvalidInputError("triplet training needs at least two groups")

    def batch_loss(batch: np.ndarray, rng: np.random.Generator) -> Tensor:
        trips = [sample_triplet(group_ids, anchors[i], rng) for i in batch]
        h_a, _ = encode_batch(_flatten([images[a] for a, _, _ in trips]), trained, spec)
        h_p, _ = encode_batch(_flatten([images[p] for _, p, _ in trips]), trained, spec)
        h_n, _ = encode_batch(_flatten([images[n] for _, _, n in trips]), trained, spec)
        return triplet_tensor(h_a, h_p, h_n, config.margin)

    return _train(len(anchors), trained, config, batch_loss)


def classifier_logits(
    images: Sequence[ImageGray], params: dict[str, Tensor], spec: EncoderSpec
) -> np.ndarray:
    """(B, M) class scores from the trained head; inference only."""
    if "head.w" not in params:
        raise InvalidInputError("params carry no classifier head")
    h, _ = encode_batch(_flatten(images), params, spec)
    return (h @ params["head.w"] + params["head.b"]).values


def classifier_accuracy(
    images: Sequence[ImageGray],
    group_ids: Sequence[str],
    params: dict[str, Tensor],
    spec: EncoderSpec,
) -> float:
    """Fraction of images whose argmax class matches their group.

    Classes are indexed by ``class_order`` of the given group ids, which
    must match the ordering used at training time.
    """
    if len(group_ids) != len(images) or not images:
        raise InvalidInputError("need one group id per image and a non-empty batch")
    index_of = {g: c for c, g in enumerate(class_order(group_ids))}
    predicted = classifier_logits(images, params, spec).argmax(axis=1)
    actual = np.array([index_of[g] for g in group_ids])
    return float(np.mean(predicted == actual))
