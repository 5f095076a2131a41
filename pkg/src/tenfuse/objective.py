"""Multi-task training objective and its analytic gradients.

Four terms make up the total loss on a batch:

  classification   softmax cross-entropy of the fusion logits (batch mean)
  contrastive      pulls genuine pairs of fused features together and
                   pushes imposter pairs beyond the margin (pair mean)
  ssl              group lasso over the slices of the weight tensor along
                   all three modes (core tensor when factored, full tensor
                   otherwise)
  attribute        per-attribute binary cross-entropy (batch mean of the
                   attribute-wise mean)

The smooth terms are differentiated analytically with each term targeting
its own parameter groups: classification trains the identity encoder, the
class factor and the core (or the full tensor); the contrastive term trains
the two fusing factors; the attribute term trains the attribute encoder and
heads.  The nonsmooth ssl term is handled by a proximal operator that
shrinks slices mode by mode and zeroes them exactly at the threshold.

Loss and gradient evaluation are pure given a parameter snapshot; batch
contributions are reduced in index order so results are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, InputError, LabelError
from .model import ModelParams, attribute_probs_batch, encode_batch, logits_batch
from .tensor import as_tensor3, mode_slice_norms, unfold
from .tucker import TuckerFactors

_PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class LossWeights:
    """Balancing weights for the non-classification terms plus the margin."""

    lambda1: float = 0.01
    lambda2: float = 1.0
    lambda3: float = 1.0
    margin: float = 1.0

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise InputError(f"{name} must be finite and nonnegative, got {v}")
        if not np.isfinite(self.margin) or self.margin <= 0:
            raise InputError(f"margin must be positive, got {self.margin}")


@dataclass(frozen=True)
class LossBreakdown:
    """Unweighted term values; ``total`` applies the balancing weights."""

    classification: float
    contrastive: float
    ssl: float
    attribute: float
    total: float


@dataclass(frozen=True)
class Batch:
    """Training batch: inputs, labels, attribute targets and sampled pairs.

    ``pairs`` holds ``(i, j, genuine)`` index triples into the batch.
    """

    x: np.ndarray
    y: np.ndarray
    l: np.ndarray
    pairs: list = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.x.shape[0]


def cross_entropy(logits, label: int) -> float:
    """Negative log softmax probability of the true class, max-stabilized."""
    logits = np.asarray(logits, dtype=np.float64)
    if not (0 <= label < logits.shape[0]):
        raise LabelError(
            f"class index {label} out of range for {logits.shape[0]} classes"
        )
    z = logits - logits.max()
    return float(np.log(np.sum(np.exp(z))) - z[label])


def pair_distance(u, v) -> float:
    """Euclidean distance between two fused features."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimensionError(f"length mismatch: {u.shape} vs {v.shape}")
    return float(np.linalg.norm(u - v))


def contrastive(d: float, genuine: bool, m: float) -> float:
    """Pair loss: genuine pairs pay half the squared distance, imposter
    pairs pay half the squared margin shortfall (zero beyond the margin)."""
    if d < 0:
        raise InputError(f"distance must be nonnegative, got {d}")
    if genuine:
        return 0.5 * d * d
    gap = max(0.0, m - d)
    return 0.5 * gap * gap


def group_lasso(g) -> float:
    """Sum of slice norms over all three modes."""
    g = as_tensor3(g)
    return float(sum(mode_slice_norms(g, k).sum() for k in (1, 2, 3)))


def attribute_loss(probs, labels) -> float:
    """Mean binary cross-entropy over attributes, probabilities clamped."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if probs.shape != labels.shape:
        raise DimensionError(
            f"probs length {probs.shape} != labels length {labels.shape}"
        )
    p = np.clip(probs, _PROB_FLOOR, 1.0 - _PROB_FLOOR)
    return float(np.mean(-labels * np.log(p) - (1.0 - labels) * np.log1p(-p)))


def prox_group_lasso(g, step: float, lambda2: float) -> np.ndarray:
    """Sequential per-mode slice shrinkage with threshold ``step * lambda2``.

    Modes are processed top, then side, then front; each slice is scaled by
    ``max(0, 1 - threshold / norm)`` so slices at or below the threshold
    become exactly zero.
    """
    g = as_tensor3(g).copy()
    if step <= 0:
        raise InputError(f"step must be positive, got {step}")
    if lambda2 < 0:
        raise InputError(f"lambda2 must be nonnegative, got {lambda2}")
    thresh = step * lambda2
    if thresh == 0.0:
        return g
    for k in (1, 2, 3):
        norms = mode_slice_norms(g, k)
        scale = np.zeros_like(norms)
        nz = norms > thresh
        scale[nz] = 1.0 - thresh / norms[nz]
        shape = [1, 1, 1]
        shape[k - 1] = -1
        g *= scale.reshape(shape)
    return g


def _weight_tensor(model: ModelParams) -> np.ndarray:
    return model.weights.g if model.is_factored else model.weights


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _batch_terms(model: ModelParams, batch: Batch, margin: float):
    """Forward pass shared by loss and gradient evaluation."""
    xs = np.asarray(batch.x, dtype=np.float64)
    y = np.asarray(batch.y, dtype=np.int64)
    labels = np.asarray(batch.l, dtype=np.float64)
    n = xs.shape[0]
    if n == 0:
        raise DimensionError("batch is empty")
    c = model.dims[1]
    if y.min() < 0 or y.max() >= c:
        raise LabelError(f"labels must lie in [0, {c})")

    feats_f, feats_g = encode_batch(xs, model.encoders)
    logits = logits_batch(model, feats_f, feats_g)
    probs = _softmax_rows(logits)
    shifted = logits - logits.max(axis=1, keepdims=True)
    cls = float(
        np.mean(np.log(np.exp(shifted).sum(axis=1)) - shifted[np.arange(n), y])
    )

    if model.is_factored:
        tf = model.weights
        u1 = feats_f @ tf.a1
        u3 = feats_g @ tf.a3
        fused = np.einsum("js,jp->jsp", u3, u1).reshape(n, -1)
    else:
        u1 = u3 = None
        fused = np.einsum("ja,jd->jad", feats_g, feats_f).reshape(n, -1)

    con = 0.0
    for i, j, genuine in batch.pairs:
        con += contrastive(pair_distance(fused[i], fused[j]), genuine, margin)
    if batch.pairs:
        con /= len(batch.pairs)

    attr_probs = attribute_probs_batch(feats_g, model.encoders)
    if attr_probs.shape != labels.shape:
        raise DimensionError(
            f"attribute labels shape {labels.shape} does not match "
            f"{attr_probs.shape}"
        )
    clipped = np.clip(attr_probs, _PROB_FLOOR, 1.0 - _PROB_FLOOR)
    attr = float(
        np.mean(-labels * np.log(clipped) - (1.0 - labels) * np.log1p(-clipped))
    )

    ssl = group_lasso(_weight_tensor(model))
    return {
        "xs": xs,
        "y": y,
        "labels": labels,
        "n": n,
        "feats_f": feats_f,
        "feats_g": feats_g,
        "logits": logits,
        "probs": probs,
        "u1": u1,
        "u3": u3,
        "fused": fused,
        "attr_probs": attr_probs,
        "classification": cls,
        "contrastive": con,
        "attribute": attr,
        "ssl": ssl,
    }


def total_loss(model: ModelParams, batch: Batch, weights: LossWeights) -> LossBreakdown:
    """Evaluate all four terms; ``total`` weighs them per the objective."""
    t = _batch_terms(model, batch, weights.margin)
    total = (
        t["classification"]
        + weights.lambda1 * t["contrastive"]
        + weights.lambda2 * t["ssl"]
        + weights.lambda3 * t["attribute"]
    )
    return LossBreakdown(
        classification=t["classification"],
        contrastive=t["contrastive"],
        ssl=t["ssl"],
        attribute=t["attribute"],
        total=float(total),
    )


def gradients(
    model: ModelParams, batch: Batch, weights: LossWeights
) -> dict[str, np.ndarray]:
    """Analytic gradients of the smooth terms under per-term targeting.

    Keys: ``core`` (or ``full``), ``a1``, ``a2``, ``a3`` for factored
    models; ``w_i``, ``w_a``, ``attr_heads``, ``attr_bias`` always.  The
    classification term drives the classifier components and the identity
    encoder, the (lambda1-weighted) contrastive term drives the fusing
    factors, and the (lambda3-weighted) attribute term drives the attribute
    encoder and heads.  The ssl term is nonsmooth and handled by
    :func:`prox_group_lasso` instead.
    """
    t = _batch_terms(model, batch, weights.margin)
    xs, y, n = t["xs"], t["y"], t["n"]
    feats_f, feats_g = t["feats_f"], t["feats_g"]
    delta = t["probs"].copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n

    e = model.encoders
    grads: dict[str, np.ndarray] = {}

    if model.is_factored:
        tf = model.weights
        u1, u3 = t["u1"], t["u3"]
        da2 = delta @ tf.a2  # (n, r_c)
        grads["core"] = np.einsum("jp,jq,js->pqs", u1, da2, u3)
        g2 = unfold(tf.g, 2)
        grads["a2"] = delta.T @ (t["fused"] @ g2.T)
        v1 = np.einsum("pqs,jq,js->jp", tf.g, da2, u3)
        grads["w_i"] = tf.a1 @ v1.T @ xs
    else:
        w = model.weights
        grads["full"] = np.einsum("jd,jc,ja->dca", feats_f, delta, feats_g)
        tvec = np.einsum("dca,jc,ja->jd", w, delta, feats_g)
        grads["w_i"] = tvec.T @ xs

    if model.is_factored and weights.lambda1 > 0 and batch.pairs:
        tf = model.weights
        r_d, _, r_a = tf.ranks
        grad_a1 = np.zeros_like(tf.a1)
        grad_a3 = np.zeros_like(tf.a3)
        u1, u3 = t["u1"], t["u3"]
        fused = t["fused"]
        scale = weights.lambda1 / len(batch.pairs)
        for i, j, genuine in batch.pairs:
            diff = fused[i] - fused[j]
            d = float(np.linalg.norm(diff))
            if genuine:
                coeff = 1.0
            else:
                if d >= weights.margin or d == 0.0:
                    continue
                coeff = -(weights.margin - d) / d
            # d(pair loss)/d(fused_i) = coeff * diff; fused_j gets -diff
            emat = (scale * coeff) * diff.reshape(r_a, r_d)
            for sample, sign in ((i, 1.0), (j, -1.0)):
                du1 = sign * (emat.T @ u3[sample])
                du3 = sign * (emat @ u1[sample])
                grad_a1 += np.outer(feats_f[sample], du1)
                grad_a3 += np.outer(feats_g[sample], du3)
        grads["a1"] = grad_a1
        grads["a3"] = grad_a3
    elif model.is_factored:
        grads["a1"] = np.zeros_like(model.weights.a1)
        grads["a3"] = np.zeros_like(model.weights.a3)

    s = e.attr_heads.shape[0]
    resid = (t["attr_probs"] - t["labels"]) / s / n  # (n, s)
    grads["attr_heads"] = weights.lambda3 * (resid.T @ feats_g)
    grads["attr_bias"] = weights.lambda3 * resid.sum(axis=0)
    grads["w_a"] = weights.lambda3 * (e.attr_heads.T @ resid.T @ xs)

    return grads
