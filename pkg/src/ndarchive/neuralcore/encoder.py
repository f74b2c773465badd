"""Toy differentiable encoders: a dense two-layer net with a projection
head for contrastive training, and a patch-based masked autoencoder.

The encoder path is flatten -> dense(hidden) -> ReLU -> dense(repr) = h,
with a projection head dense(proj) + l2-normalize = z. Retrieval uses h
(the pre-projection representation) unless told otherwise; h is never
silently normalized.

The masked autoencoder embeds each patch with a shared dense layer plus
a per-patch position encoding, encodes only visible patches, fills
masked positions with a learned token, and decodes every patch with a
single shared dense layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ndarchive.errors import DegenerateEmbeddingError, InvalidInputError
from ndarchive.imagecore.raster import ImageGray
from ndarchive.neuralcore.autodiff import Tensor, as_tensor, parameter


@dataclass(frozen=True)
class Embedding:
    """Float descriptor vector; ``normalized`` marks unit l2 norm."""

    values: np.ndarray
    normalized: bool

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1:
            raise InvalidInputError(f"embedding must be a vector, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("embedding contains non-finite entries")
        if self.normalized and abs(np.linalg.norm(arr) - 1.0) > 1e-6:
            raise InvalidInputError("normalized embedding must have unit l2 norm")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class EncoderSpec:
    input_size: int
    hidden_dim: int = 64
    repr_dim: int = 64
    proj_dim: int = 32
    patch_size: int = 8

    def __post_init__(self):
        if min(self.input_size, self.hidden_dim, self.repr_dim, self.proj_dim, self.patch_size) < 1:
            raise InvalidInputError("encoder dimensions must be >= 1")

    @property
    def patch_count(self) -> int:
        if self.input_size % self.patch_size != 0:
            raise InvalidInputError(
                f"input_size {self.input_size} not divisible by patch_size {self.patch_size}"
            )
        return (self.input_size // self.patch_size) ** 2


@dataclass(frozen=True)
class MaskPlan:
    """Which patches the encoder must not see."""

    patch_count: int
    masked_indices: tuple[int, ...]
    ratio: float

    def __post_init__(self):
        idx = self.masked_indices
        if len(idx) != round(self.ratio * self.patch_count):
            raise InvalidInputError("masked index count must equal round(ratio * patch_count)")
        if any(not (0 <= i < self.patch_count) for i in idx):
            raise InvalidInputError("masked indices out of range")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise InvalidInputError("masked indices must be strictly increasing")

    @property
    def visible_indices(self) -> tuple[int, ...]:
        masked = set(self.masked_indices)
        return tuple(i for i in range(self.patch_count) if i not in masked)


def make_mask_plan(patch_count: int, ratio: float, rng: np.random.Generator) -> MaskPlan:
    """Sample round(ratio * patch_count) masked patches without replacement."""
    n_masked = round(ratio * patch_count)
    picked = rng.choice(patch_count, size=n_masked, replace=False)
    return MaskPlan(patch_count, tuple(sorted(int(i) for i in picked)), ratio)


def _uniform_init(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return parameter(rng.uniform(-bound, bound, size=shape))


def init_encoder_params(spec: EncoderSpec, seed: int) -> dict[str, Tensor]:
    """Dense encoder + projection head parameters, uniform(+-1/sqrt(fan_in))."""
    rng = np.random.default_rng(seed)
    d_in = spec.input_size * spec.input_size
    return {
        "enc.w1": _uniform_init(rng, (d_in, spec.hidden_dim), d_in),
        "enc.b1": _uniform_init(rng, (1, spec.hidden_dim), d_in),
        "enc.w2": _uniform_init(rng, (spec.hidden_dim, spec.repr_dim), spec.hidden_dim),
        "enc.b2": _uniform_init(rng, (1, spec.repr_dim), spec.hidden_dim),
        "proj.w": _uniform_init(rng, (spec.repr_dim, spec.proj_dim), spec.repr_dim),
        "proj.b": _uniform_init(rng, (1, spec.proj_dim), spec.repr_dim),
    }


def init_classifier_head(spec: EncoderSpec, n_classes: int, seed: int) -> dict[str, Tensor]:
    rng = np.random.default_rng(seed)
    return {
        "head.w": _uniform_init(rng, (spec.repr_dim, n_classes), spec.repr_dim),
        "head.b": _uniform_init(rng, (1, n_classes), spec.repr_dim),
    }


def init_mae_params(spec: EncoderSpec, seed: int) -> dict[str, Tensor]:
    rng = np.random.default_rng(seed)
    p2 = spec.patch_size * spec.patch_size
    n = spec.patch_count
    return {
        "mae.embed.w": _uniform_init(rng, (p2, spec.hidden_dim), p2),
        "mae.embed.b": _uniform_init(rng, (1, spec.hidden_dim), p2),
        "mae.pos": _uniform_init(rng, (n, spec.hidden_dim), p2),
        "mae.enc.w": _uniform_init(rng, (spec.hidden_dim, spec.repr_dim), spec.hidden_dim),
        "mae.enc.b": _uniform_init(rng, (1, spec.repr_dim), spec.hidden_dim),
        "mae.mask_token": _uniform_init(rng, (1, spec.repr_dim), spec.repr_dim),
        "mae.dec.pos": _uniform_init(rng, (n, spec.repr_dim), spec.repr_dim),
        "mae.dec.w": _uniform_init(rng, (spec.repr_dim, p2), spec.repr_dim),
        "mae.dec.b": _uniform_init(rng, (1, p2), spec.repr_dim),
    }


def _check_input(img: ImageGray, spec: EncoderSpec) -> None:
    if img.width != spec.input_size or img.height != spec.input_size:
        raise InvalidInputError(
            f"image is {img.width}x{img.height}, encoder expects "
            f"{spec.input_size}x{spec.input_size}"
        )


def encode_batch(x: Tensor, params: dict[str, Tensor], spec: EncoderSpec) -> tuple[Tensor, Tensor]:
    """Differentiable forward for a (B, input_size^2) batch.

    Returns (h, z): h is (B, repr_dim) unnormalized, z is (B, proj_dim)
    with unit rows. Raises on an exactly-zero projection row, which
    cannot be normalized.
    """
    hidden = (x @ params["enc.w1"] + params["enc.b1"]).relu()
    h = hidden @ params["enc.w2"] + params["enc.b2"]
    p = h @ params["proj.w"] + params["proj.b"]
    sq = (p * p).sum(axis=1, keepdims=True)
    if np.any(sq.values == 0.0):
        raise DegenerateEmbeddingError("projection produced an exactly-zero vector")
    z = p / sq.sqrt()
    return h, z


def encode(img: ImageGray, params: dict[str, Tensor], spec: EncoderSpec) -> tuple[Embedding, Embedding]:
    """Embed one image: (h unnormalized, z l2-normalized)."""
    _check_input(img, spec)
    x = as_tensor(img.data.reshape(1, -1))
    h, z = encode_batch(x, params, spec)
    return (
        Embedding(h.values[0], normalized=False),
        Embedding(z.values[0], normalized=True),
    )


def image_patches(img: ImageGray, patch_size: int) -> np.ndarray:
    """(patch_count, patch_size^2) row-major patch grid, rows flattened."""
    s = img.height
    n = s // patch_size
    return (
        img.pixels.reshape(n, patch_size, n, patch_size)
        .transpose(0, 2, 1, 3)
        .reshape(n * n, patch_size * patch_size)
    )


def mae_forward_tensor(
    img: ImageGray,
    plan: MaskPlan,
    params: dict[str, Tensor],
    spec: EncoderSpec,
    loss_scope: str = "masked",
) -> tuple[Tensor, Tensor]:
    """Differentiable MAE pass; returns (reconstruction, loss) tensors.

    The encoder sees only visible patches; masked positions are filled
    with the learned mask token before the decoder runs over all
    patches. The loss is MSE over masked patches (or all, per
    ``loss_scope``).
    """
    _check_input(img, spec)
    n = spec.patch_count
    if plan.patch_count != n:
        raise InvalidInputError(f"mask plan covers {plan.patch_count} patches, encoder has {n}")
    visible = plan.visible_indices
    if not visible:
        raise InvalidInputError("mask plan leaves no visible patches")
    if loss_scope not in ("masked", "all"):
        raise InvalidInputError(f"unknown loss scope {loss_scope!r}")

    patches = image_patches(img, spec.patch_size)
    vis = np.asarray(visible, dtype=np.intp)
    masked = np.asarray(plan.masked_indices, dtype=np.intp)

    x_vis = as_tensor(patches[vis])
    pos_vis = params["mae.pos"][vis, :]
    emb = (x_vis @ params["mae.embed.w"] + params["mae.embed.b"] + pos_vis).relu()
    h_vis = emb @ params["mae.enc.w"] + params["mae.enc.b"]

    # Assemble decoder tokens with constant selection matrices: visible
    # rows carry their encoding, masked rows carry the mask token.
    scatter = np.zeros((n, len(visible)))
    scatter[vis, np.arange(len(visible))] = 1.0
    mask_col = np.zeros((n, 1))
    mask_col[masked, 0] = 1.0
    tokens = as_tensor(scatter) @ h_vis + as_tensor(mask_col) @ params["mae.mask_token"]

    recon = (tokens + params["mae.dec.pos"]) @ params["mae.dec.w"] + params["mae.dec.b"]

    if loss_scope == "masked" and len(masked) > 0:
        select = np.zeros((len(masked), n))
        select[np.arange(len(masked)), masked] = 1.0
        diff = as_tensor(select) @ recon - as_tensor(patches[masked])
    else:
        diff = recon - as_tensor(patches)
    loss = (diff * diff).mean()
    return recon, loss


def mae_forward(
    img: ImageGray,
    plan: MaskPlan,
    params: dict[str, Tensor],
    spec: EncoderSpec,
    loss_scope: str = "masked",
) -> tuple[np.ndarray, float]:
    """Per-patch pixel predictions for all patches plus the scalar loss."""
    recon, loss = mae_forward_tensor(img, plan, params, spec, loss_scope)
    return recon.values, loss.item()


def mae_embed(img: ImageGray, params: dict[str, Tensor], spec: EncoderSpec) -> Embedding:
    """Inference embedding: encode with every patch visible, mean-pool."""
    _check_input(img, spec)
    patches = image_patches(img, spec.patch_size)
    emb = np.maximum(
        patches @ params["mae.embed.w"].values
        + params["mae.embed.b"].values
        + params["mae.pos"].values,
        0.0,
    )
    h = emb @ params["mae.enc.w"].values + params["mae.enc.b"].values
    return Embedding(h.mean(axis=0), normalized=False)
