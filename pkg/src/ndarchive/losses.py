"""Training objectives: NT-Xent contrastive, triplet, and cross-entropy.

Each loss has a differentiable tensor form (used by the training loops
and gradient checks) and a scalar wrapper over plain embeddings. The
contrastive softmax and the cross-entropy both subtract the row maximum
before exponentiation, which also makes the single-image contrastive
case return exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ndarchive.errors import InvalidInputError
from ndarchive.neuralcore.autodiff import Tensor, as_tensor
from ndarchive.neuralcore.encoder import Embedding

# The contrastive denominator sums over every embedding in the batch except
# the anchor itself (the positive stays in). Asserted by tests so the choice
# cannot drift silently; the alternative reading would also drop the positive.
NT_XENT_DENOMINATOR = "all-except-anchor"


@dataclass(frozen=True)
class ContrastiveBatch:
    """2N unit-norm view embeddings; rows (2k, 2k+1) are views of image k."""

    views: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.views, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] % 2 != 0 or arr.shape[0] < 2:
            raise InvalidInputError(f"views must be a (2N, D) matrix, got shape {arr.shape}")
        norms = np.linalg.norm(arr, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise InvalidInputError("all view embeddings must be unit-norm")
        object.__setattr__(self, "views", arr)

    @property
    def n_images(self) -> int:
        return self.views.shape[0] // 2

    @classmethod
    def from_embeddings(cls, embeddings: list[Embedding]) -> "ContrastiveBatch":
        return cls(np.stack([e.values for e in embeddings]))


@dataclass(frozen=True)
class Triplet:
    """(anchor, positive, negative) descriptor vectors of equal dimension."""

    anchor: np.ndarray
    positive: np.ndarray
    negative: np.ndarray

    def __post_init__(self):
        vecs = []
        for name in ("anchor", "positive", "negative"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.ndim != 1 or not np.all(np.isfinite(arr)):
                raise InvalidInputError(f"{name} must be a finite vector")
            vecs.append(arr)
        if not (vecs[0].size == vecs[1].size == vecs[2].size):
            raise InvalidInputError("triplet members must share one dimension")
        for name, arr in zip(("anchor", "positive", "negative"), vecs):
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class SupervisedBatch:
    """Per-image class scores plus integer labels in [0, M)."""

    logits: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        logits = np.asarray(self.logits, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.intp)
        if logits.ndim != 2 or logits.shape[1] < 2:
            raise InvalidInputError("logits must be (B, M) with M >= 2")
        if labels.shape != (logits.shape[0],):
            raise InvalidInputError("need exactly one label per logits row")
        if np.any(labels < 0) or np.any(labels >= logits.shape[1]):
            raise InvalidInputError("label out of range")
        object.__setattr__(self, "logits", logits)
        object.__setattr__(self, "labels", labels)


def nt_xent_tensor(z: Tensor, tau: float) -> Tensor:
    """Contrastive loss over a (2N, D) tensor of unit-norm rows.

    Per ordered positive pair (i, j):
    l(i, j) = -log( exp(sim(z_i, z_j)/tau) / sum_{k != i} exp(sim(z_i, z_k)/tau) );
    the total is the mean of l over all 2N ordered pairs. The row max of
    the off-diagonal similarities is subtracted inside the softmax (a
    constant shift, gradient-exact).
    """
    if tau <= 0:
        raise InvalidInputError("temperature must be > 0")
    two_n = z.shape[0]
    sim = (z @ z.T) / tau
    offdiag = 1.0 - np.eye(two_n)
    row_max = np.max(
        np.where(offdiag > 0, sim.values, -np.inf), axis=1, keepdims=True
    )
    shifted = sim - as_tensor(row_max)
    denom = (shifted.exp() * as_tensor(offdiag)).sum(axis=1)

    partner = np.arange(two_n) ^ 1  # 2k <-> 2k+1
    pos_mask = np.zeros((two_n, two_n))
    pos_mask[np.arange(two_n), partner] = 1.0
    pos = (shifted * as_tensor(pos_mask)).sum(axis=1)
    return (denom.log() - pos).mean()


def nt_xent_loss(batch: ContrastiveBatch, tau: float) -> float:
    """Scalar NT-Xent loss of a validated contrastive batch."""
    return nt_xent_tensor(as_tensor(batch.views), tau).item()


def triplet_tensor(anchor: Tensor, positive: Tensor, negative: Tensor, alpha: float) -> Tensor:
    """Mean over rows of max(0, d2(a,p) - d2(a,n) + alpha)."""
    if alpha < 0:
        raise InvalidInputError("margin must be >= 0")
    d_ap = ((anchor - positive) * (anchor - positive)).sum(axis=1)
    d_an = ((anchor - negative) * (anchor - negative)).sum(axis=1)
    return (d_ap - d_an + alpha).relu().mean()


def triplet_loss(triplets: list[Triplet], alpha: float) -> float:
    """Scalar hinged triplet loss, mean over the batch."""
    if not triplets:
        raise InvalidInputError("triplet list must be non-empty")
    a = as_tensor(np.stack([t.anchor for t in triplets]))
    p = as_tensor(np.stack([t.positive for t in triplets]))
    n = as_tensor(np.stack([t.negative for t in triplets]))
    return triplet_tensor(a, p, n, alpha).item()


def cross_entropy_tensor(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log softmax probability of the labeled class.

    Stabilized by subtracting each row's maximum before exponentiation.
    """
    rows = np.arange(logits.shape[0])
    row_max = logits.values.max(axis=1, keepdims=True)
    shifted = logits - as_tensor(row_max)
    lse = shifted.exp().sum(axis=1).log()
    picked = shifted[rows, np.asarray(labels, dtype=np.intp)]
    return (lse - picked).mean()


def cross_entropy_loss(batch: SupervisedBatch) -> float:
    """Scalar categorical cross-entropy of a validated batch."""
    return cross_entropy_tensor(as_tensor(batch.logits), batch.labels).item()
