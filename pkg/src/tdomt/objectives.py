"""Training objectives: smoothed translation cross-entropy, the
instruction-level contrastive loss over tag states, and their sum."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .corpus.instance import TranslationInstance
from .numerics import DomainError, Tensor


def cross_entropy_mnmt(logits, targets, label_smoothing=0.0, weights=None):
    """Summed -log p(y_j | ...) over target positions with uniform label smoothing.

    ``weights`` (same shape as ``targets``) zeroes out padding and any rows
    that must not contribute, such as identity pairs.
    """
    return nx.cross_entropy(logits, targets, weights, label_smoothing)


def make_identity_pair(instance: TranslationInstance) -> TranslationInstance:
    """The pseudo pair (tag, y, y) translating the target sentence into itself."""
    if not instance.target:
        raise ValueError("identity pair needs a non-empty target")
    return TranslationInstance(
        tag=instance.tag,
        source=instance.target,
        target=instance.target,
        src_lang=instance.tgt_lang,
        tgt_lang=instance.tgt_lang,
        concept=instance.concept,
    )


@dataclass
class InstruclBatchSet:
    """Anchor tag states (B, d) and the positives from their identity pairs (B, d)."""

    anchors: Tensor
    positives: Tensor
    exclude: np.ndarray | None = None  # (B, B) True where a negative must be dropped

    def __post_init__(self):
        if self.anchors.ndim != 2 or self.anchors.shape != self.positives.shape:
            raise ValueError(f"anchors {self.anchors.shape} and positives {self.positives.shape} must both be (B, d)")
        if self.anchors.shape[0] < 1:
            raise ValueError("InstruCL needs at least one anchor")


def collision_mask(tgt_langs, concepts):
    """True where two batch rows share target language and semantics."""
    b = len(tgt_langs)
    mask = np.zeros((b, b), dtype=bool)
    for i in range(b):
        for j in range(b):
            if i != j and concepts[i] is not None and tgt_langs[i] == tgt_langs[j] and concepts[i] == concepts[j]:
                mask[i, j] = True
    return mask


def contrastive_from_similarities(pos, neg, keep=None, temperature=1.0):
    """sum_a log(1 + sum_i keep_ai e^{(s_ai- - s_a+)/T}) for s+ (B,) and s- (B, B) tensors.

    Equal to -sum_a log(e^{s+} / (e^{s+} + sum_i e^{s_i-})); the gap form is
    exactly zero without negatives and keeps the exponent within [-2/T, 2/T]
    for cosine similarities.
    """
    if temperature <= 0:
        raise DomainError("temperature must be positive")
    b = pos.shape[0]
    if keep is None:
        keep = 1.0 - np.eye(b)
    scale = 1.0 / temperature
    gap = nx.mul(nx.sub(neg, nx.reshape(pos, (b, 1))), scale)
    ratio = nx.sum_axis(nx.mul(nx.exp(gap), np.asarray(keep, dtype=pos.dtype)), 1)
    return nx.total(nx.log(nx.add(ratio, 1.0)))


def instrucl_loss(batch: InstruclBatchSet, temperature=1.0):
    """-sum_anchor log( e^{s+} / (e^{s+} + sum_i e^{s_i-}) ) with cosine similarities.

    ``s+`` compares an anchor with its positive, ``s_i-`` with every other
    anchor of the batch (minus excluded collisions).
    """
    a = nx.l2_normalize(batch.anchors)
    p = nx.l2_normalize(batch.positives)
    b = a.shape[0]
    keep = 1.0 - np.eye(b)
    if batch.exclude is not None:
        keep = keep * ~np.asarray(batch.exclude, dtype=bool)
    pos = nx.dot(a, p)  # (B,)
    neg = nx.matmul(a, nx.transpose(a, (1, 0)))  # (B, B)
    return contrastive_from_similarities(pos, neg, keep, temperature)


def joint_loss(ce, ctr):
    """Unweighted sum of the translation and contrastive losses."""
    for name, v in (("ce", ce), ("ctr", ctr)):
        value = v.item() if isinstance(v, Tensor) else float(v)
        if not math.isfinite(value):
            raise DomainError(f"non-finite {name} loss: {value}")
    if not isinstance(ce, Tensor) and not isinstance(ctr, Tensor):
        return float(ce) + float(ctr)
    return nx.add(ce, ctr)
