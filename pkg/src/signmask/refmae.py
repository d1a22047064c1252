"""Reference numerics for the training objectives and fusion routing.

Tiny, dependency-free oracle implementations of the losses and the
cross-attention fusion arithmetic, with analytic gradients where tests
need them. Nothing here trains; trainers are expected to match these
functions on small instances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyHandSet,
    EmptyMask,
    NonPositiveProbability,
    ShapeMismatch,
)


@dataclass
class MaskedPair:
    """Ground truth and reconstruction with the masked-position index set.

    Positions may be scalars (shape (P,)) or value vectors (shape (P, D)).
    """

    truth: np.ndarray
    recon: np.ndarray
    masked_indices: np.ndarray

    def __post_init__(self):
        self.truth = np.asarray(self.truth, dtype=np.float64)
        self.recon = np.asarray(self.recon, dtype=np.float64)
        self.masked_indices = np.asarray(self.masked_indices, dtype=np.int64)
        if self.truth.shape != self.recon.shape:
            raise ShapeMismatch(
                f"truth {self.truth.shape} vs recon {self.recon.shape}")
        if self.masked_indices.size == 0:
            raise EmptyMask("masked index set is empty")
        if (self.masked_indices.min() < 0
                or self.masked_indices.max() >= self.truth.shape[0]):
            raise ShapeMismatch("masked index out of range")


def masked_mse(pair: MaskedPair) -> float:
    """Mean over masked positions of the squared reconstruction error.

    Vector-valued positions contribute their squared Euclidean norm; the
    divisor is the number of masked positions, not components.
    """
    diff = pair.truth[pair.masked_indices] - pair.recon[pair.masked_indices]
    return float(np.sum(diff * diff) / pair.masked_indices.size)


def masked_mse_grad(pair: MaskedPair) -> np.ndarray:
    """Analytic gradient of masked_mse with respect to the reconstruction."""
    grad = np.zeros_like(pair.recon)
    idx = pair.masked_indices
    grad[idx] = 2.0 * (pair.recon[idx] - pair.truth[idx]) / idx.size
    return grad


@dataclass
class SoftLabel:
    """A probability vector over K classes."""

    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 1:
            raise ShapeMismatch("soft label must be a vector")
        if self.probs.min() < 0.0:
            raise NonPositiveProbability("soft label has a negative entry")
        if abs(float(self.probs.sum()) - 1.0) > 1e-9:
            raise NonPositiveProbability("soft label does not sum to 1")

    @property
    def num_classes(self) -> int:
        return self.probs.size


def one_hot(cls_index: int, num_classes: int) -> np.ndarray:
    y = np.zeros(num_classes, dtype=np.float64)
    y[cls_index] = 1.0
    return y


def mixup(x_i: np.ndarray, x_j: np.ndarray, y_i: np.ndarray,
          y_j: np.ndarray, lam: float | None = None, alpha: float = 0.8,
          rng: np.random.Generator | None = None
          ) -> tuple[np.ndarray, SoftLabel]:
    """Convex blend of two samples and their one-hot labels.

    lam defaults to a Beta(alpha, alpha) draw from rng (a fresh default
    generator when omitted).
    """
    x_i = np.asarray(x_i, dtype=np.float64)
    x_j = np.asarray(x_j, dtype=np.float64)
    y_i = np.asarray(y_i, dtype=np.float64)
    y_j = np.asarray(y_j, dtype=np.float64)
    if x_i.shape != x_j.shape:
        raise ShapeMismatch(f"sample shapes differ: {x_i.shape} vs {x_j.shape}")
    if y_i.shape != y_j.shape:
        raise ShapeMismatch(f"label shapes differ: {y_i.shape} vs {y_j.shape}")
    if lam is None:
        if rng is None:
            rng = np.random.default_rng()
        lam = float(rng.beta(alpha, alpha))
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    blended = lam * x_i + (1.0 - lam) * x_j
    return blended, SoftLabel(lam * y_i + (1.0 - lam) * y_j)


def soft_cross_entropy(label: SoftLabel, probs: np.ndarray) -> float:
    """Cross-entropy of a prediction against a soft target.

    Raises:
        NonPositiveProbability: a predicted probability is <= 0.
        ShapeMismatch: class counts differ.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != label.probs.shape:
        raise ShapeMismatch(
            f"prediction has {probs.shape}, label has {label.probs.shape}")
    if probs.min() <= 0.0:
        raise NonPositiveProbability("prediction has a nonpositive entry")
    return float(-np.sum(label.probs * np.log(probs)))


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax along the last axis."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def soft_ce_logit_grad(label: SoftLabel, logits: np.ndarray) -> np.ndarray:
    """Gradient of soft_cross_entropy(label, softmax(logits)) in logits."""
    return softmax(logits) - label.probs


def restricted_token_loss(token_losses: np.ndarray, token_set) -> float:
    """Mean of per-token losses over a token subset (hand regions).

    Raises:
        EmptyHandSet: the subset is empty.
    """
    token_losses = np.asarray(token_losses, dtype=np.float64)
    idx = sorted(token_set)
    if not idx:
        raise EmptyHandSet("loss restriction set is empty")
    if idx[0] < 0 or idx[-1] >= token_losses.size:
        raise ShapeMismatch("loss restriction index out of range")
    return float(token_losses[idx].mean())


def full_frame_token_loss(token_losses: np.ndarray) -> float:
    """Unrestricted mean, used by the video streams."""
    token_losses = np.asarray(token_losses, dtype=np.float64)
    if token_losses.size == 0:
        raise EmptyMask("no token losses")
    return float(token_losses.mean())


@dataclass(frozen=True)
class FusionSpec:
    """Dimensions and routing depth for the two cross-attention cascades."""

    dim: int
    layers: int = 4

    def __post_init__(self):
        if self.dim < 1:
            raise ShapeMismatch("token dim must be >= 1")
        if self.layers < 1:
            raise ShapeMismatch("layer count must be >= 1")


@dataclass
class AttentionLayerWeights:
    """Projection matrices for one single-head cross-attention layer."""

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray


@dataclass
class FusionWeights:
    """Layer weights for the video cascade, then the keypoint cascade."""

    video_cascade: list[AttentionLayerWeights] = field(default_factory=list)
    keypoint_cascade: list[AttentionLayerWeights] = field(default_factory=list)


def identity_weights(spec: FusionSpec) -> FusionWeights:
    eye = np.eye(spec.dim)
    make = lambda: AttentionLayerWeights(eye.copy(), eye.copy(),
                                         eye.copy(), eye.copy())
    return FusionWeights(
        video_cascade=[make() for _ in range(spec.layers)],
        keypoint_cascade=[make() for _ in range(spec.layers)])


def random_weights(spec: FusionSpec,
                   rng: np.random.Generator) -> FusionWeights:
    d = spec.dim
    make = lambda: AttentionLayerWeights(*(rng.standard_normal((d, d))
                                           for _ in range(4)))
    return FusionWeights(
        video_cascade=[make() for _ in range(spec.layers)],
        keypoint_cascade=[make() for _ in range(spec.layers)])


def _check_tokens(name: str, tokens: np.ndarray, dim: int) -> np.ndarray:
    tokens = np.asarray(tokens, dtype=np.float64)
    if tokens.ndim != 2 or tokens.shape[1] != dim or tokens.shape[0] < 1:
        raise ShapeMismatch(f"{name} tokens must be (n, {dim}), "
                            f"got {tokens.shape}")
    return tokens


def _cross_attention(queries: np.ndarray, keys_values: np.ndarray,
                     w: AttentionLayerWeights, dim: int) -> np.ndarray:
    q = queries @ w.wq
    k = keys_values @ w.wk
    v = keys_values @ w.wv
    attn = softmax(q @ k.T / math.sqrt(dim))
    return (attn @ v) @ w.wo


def fuse(spec: FusionSpec, tube_tokens: np.ndarray, st_tokens: np.ndarray,
         keypoint_tokens: np.ndarray, weights: FusionWeights) -> np.ndarray:
    """Two cascades of single-head cross-attention, then pooled concat.

    Cascade 1 queries with the tube-masked stream against the
    spatio-temporal stream; cascade 2 queries with the fused video tokens
    against the keypoint stream. Each cascade output is mean-pooled over
    tokens and the two pooled vectors are concatenated, giving 2 * dim.
    """
    d = spec.dim
    tube = _check_tokens("tube", tube_tokens, d)
    st = _check_tokens("st", st_tokens, d)
    kp = _check_tokens("keypoint", keypoint_tokens, d)
    for cascade in (weights.video_cascade, weights.keypoint_cascade):
        if len(cascade) != spec.layers:
            raise ShapeMismatch(
                f"expected {spec.layers} layers per cascade, got {len(cascade)}")
        for w in cascade:
            for mat in (w.wq, w.wk, w.wv, w.wo):
                if np.asarray(mat).shape != (d, d):
                    raise ShapeMismatch("projection matrix shape mismatch")
    x = tube
    for w in weights.video_cascade:
        x = _cross_attention(x, st, w, d)
    fused_video = x
    y = fused_video
    for w in weights.keypoint_cascade:
        y = _cross_attention(y, kp, w, d)
    return np.concatenate([y.mean(axis=0), fused_video.mean(axis=0)])
