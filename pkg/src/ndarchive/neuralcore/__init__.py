"""Toy differentiable encoder/decoder toolkit with exact gradients."""

from ndarchive.neuralcore.autodiff import Tensor, as_tensor, parameter, zero_grads
from ndarchive.neuralcore.checkpoint import load_checkpoint, save_checkpoint
from ndarchive.neuralcore.encoder import (
    Embedding,
    EncoderSpec,
    MaskPlan,
    encode,
    encode_batch,
    image_patches,
    init_classifier_head,
    init_encoder_params,
    init_mae_params,
    make_mask_plan,
    mae_embed,
    mae_forward,
    mae_forward_tensor,
)
from ndarchive.neuralcore.optim import AdamState, adam_step, decayed_lr, init_adam_state

__all__ = [
    "AdamState",
    "Embedding",
    "EncoderSpec",
    "MaskPlan",
    "Tensor",
    "adam_step",
    "as_tensor",
    "decayed_lr",
    "encode",
    "encode_batch",
    "image_patches",
    "init_adam_state",
    "init_classifier_head",
    "init_encoder_params",
    "init_mae_params",
    "load_checkpoint",
    "make_mask_plan",
    "mae_embed",
    "mae_forward",
    "mae_forward_tensor",
    "parameter",
    "save_checkpoint",
    "zero_grads",
]
