"""Instruction tagging, architecture-specific input assembly and batching."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .instance import TranslationInstance
from .vocab import Vocabulary


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True)
class TaggedInstance:
    """Source and target streams after placing the language tags.

    ``trigger`` starts decoding; ``forced`` leading target tokens are
    known in advance (a target-side tag) and are fed rather than predicted
    at inference time.
    """

    source: tuple
    target: tuple
    trigger: int
    forced: int = 0


def apply_tag_strategy(instance: TranslationInstance, strategy: int, vocab: Vocabulary) -> TaggedInstance:
    """Place language tags following instruction strategy 1-5.

    1: target tag before the source; 2: target tag before the target;
    3: target tag replaces [eos] as decoding trigger; 4: target tag on both
    sides; 5: source-language tag before the source, target tag before the target.
    """
    x, y, ty = instance.source, instance.target, instance.tag
    eos = vocab.eos_id
    if strategy == 1:
        return TaggedInstance((ty,) + x, y, eos)
    if strategy == 2:
        return TaggedInstance(x, (ty,) + y, eos, forced=1)
    if strategy == 3:
        return TaggedInstance(x, y, ty)
    if strategy == 4:
        return TaggedInstance((ty,) + x, (ty,) + y, eos, forced=1)
    if strategy == 5:
        src_lang = instance.src_lang or vocab.detect_language(x)
        if src_lang is None:
            raise AssemblyError("cannot determine the source language for strategy 5")
        return TaggedInstance((vocab.tag(src_lang),) + x, (ty,) + y, eos, forced=1)
    raise AssemblyError(f"unknown tag strategy {strategy}")


@dataclass(frozen=True)
class ModelInput:
    """Token streams ready for a model.

    ``source`` ends with [eos]; ``target_in`` starts with the trigger;
    ``labels[i]`` is the token that follows ``target_in[i]``.  ``stream`` is
    the concatenated single-stack form (source then target_in); for
    single-stack models the labels align with its last ``len(labels)``
    positions.
    """

    source: tuple
    target_in: tuple
    labels: tuple
    forced: int = 0

    @property
    def stream(self):
        return self.source + self.target_in


def assemble_model_input(tagged: TaggedInstance, architecture: str, eos_id: int) -> ModelInput:
    if not tagged.source:
        raise AssemblyError("empty source")
    if architecture not in ("encoder_decoder", "decoder_only", "tdo"):
        raise AssemblyError(f"unknown architecture {architecture!r}")
    source = tagged.source + (eos_id,)
    target_in = (tagged.trigger,) + tagged.target
    labels = tagged.target + (eos_id,)
    return ModelInput(source, target_in, labels, tagged.forced)


def prepare(instance, strategy, vocab, architecture):
    return assemble_model_input(apply_tag_strategy(instance, strategy, vocab), architecture, vocab.eos_id)


@dataclass
class Batch:
    src: np.ndarray
    src_pad: np.ndarray
    tgt_in: np.ndarray
    tgt_pad: np.ndarray
    labels: np.ndarray
    weights: np.ndarray
    index: np.ndarray  # positions of the rows in the originating list

    def __len__(self):
        return self.src.shape[0]

    @property
    def num_tokens(self):
        return int((~self.src_pad).sum() + (~self.tgt_pad).sum())

    @property
    def num_target_tokens(self):
        return int(self.weights.sum())

    @property
    def padded_size(self):
        return self.src.shape[0] * (self.src.shape[1] + self.tgt_in.shape[1])


def collate(inputs, pad_id=0, index=None):
    """Pad a list of ModelInputs into one Batch (pad positions get zero loss weight)."""
    if not inputs:
        raise AssemblyError("cannot collate an empty list")
    b = len(inputs)
    s = max(len(m.source) for m in inputs)
    t = max(len(m.target_in) for m in inputs)
    src = np.full((b, s), pad_id, dtype=np.int64)
    tgt = np.full((b, t), pad_id, dtype=np.int64)
    lab = np.full((b, t), pad_id, dtype=np.int64)
    for i, m in enumerate(inputs):
        src[i, : len(m.source)] = m.source
        tgt[i, : len(m.target_in)] = m.target_in
        lab[i, : len(m.labels)] = m.labels
    src_pad = np.ones((b, s), dtype=bool)
    tgt_pad = np.ones((b, t), dtype=bool)
    for i, m in enumerate(inputs):
        src_pad[i, : len(m.source)] = False
        tgt_pad[i, : len(m.target_in)] = False
    weights = (~tgt_pad).astype(np.float64)
    idx = np.arange(b) if index is None else np.asarray(index)
    return Batch(src, src_pad, tgt, tgt_pad, lab, weights, idx)


def make_batches(inputs, max_tokens, rng=None, pad_id=0):
    """Length-bucketed batches whose padded size stays within ``max_tokens``.

    With ``rng`` the within-length order and the batch order are shuffled
    deterministically; without it the order is fully sorted.
    """
    if not inputs:
        raise AssemblyError("no instances to batch")
    lengths = np.array([len(m.source) + len(m.target_in) for m in inputs])
    too_long = np.flatnonzero(lengths > max_tokens)
    if too_long.size:
        raise AssemblyError(f"instance {int(too_long[0])} has {int(lengths[too_long[0]])} tokens > max_tokens={max_tokens}")
    tie = rng.permutation(len(inputs)) if rng is not None else np.arange(len(inputs))
    src_len = np.array([len(m.source) for m in inputs])
    order = np.lexsort((tie, src_len, lengths))
    groups = []
    cur, s_max, t_max = [], 0, 0
    for i in order:
        m = inputs[i]
        ns, nt = max(s_max, len(m.source)), max(t_max, len(m.target_in))
        if cur and (len(cur) + 1) * (ns + nt) > max_tokens:
            groups.append(cur)
            cur, ns, nt = [], len(m.source), len(m.target_in)
        cur.append(int(i))
        s_max, t_max = ns, nt
    if cur:
        groups.append(cur)
    if rng is not None:
        groups = [groups[j] for j in rng.permutation(len(groups))]
    return [collate([inputs[i] for i in g], pad_id, g) for g in groups]
