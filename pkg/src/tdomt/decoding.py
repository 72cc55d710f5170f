"""Greedy and beam-search decoding.

The source side is encoded once per batch; every step re-runs the
target-side layers over the growing prefix (no key/value cache).  Tokens
that the tag strategy fixes in advance (a target-side tag) are fed after
the trigger and are not part of the returned hypothesis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus.assemble import ModelInput
from .model.transformer import Model, SourceEncoding
from .numerics import Tensor


@dataclass
class Hypothesis:
    tokens: tuple  # generated tokens, without forced prefix and final [eos]
    logprob: float  # summed log-probability, including the final [eos] if produced
    length: int  # number of scored tokens
    finished: bool

    @property
    def score(self):
        return length_normalized(self.logprob, self.length)


def length_normalized(logprob, length, alpha=1.0):
    return logprob / max(length, 1) ** alpha


def _log_softmax(x):
    x = x.astype(np.float64)
    m = x.max(axis=-1, keepdims=True)
    return x - m - np.log(np.exp(x - m).sum(axis=-1, keepdims=True))


def _pad_sources(inputs, pad_id=0):
    s = max(len(m.source) for m in inputs)
    src = np.full((len(inputs), s), pad_id, dtype=np.int64)
    for i, m in enumerate(inputs):
        src[i, : len(m.source)] = m.source
    return src, src == pad_id


def _prefix(m: ModelInput):
    """Trigger plus forced target tokens."""
    return tuple(m.target_in[: 1 + m.forced])


def _select(enc: SourceEncoding, rows):
    return SourceEncoding(Tensor(enc.states.data[rows]), enc.pad[rows], enc.layers)


def _next_logprobs(model, enc, prefixes):
    """Log-probabilities of the next token for each (equal-length) prefix row."""
    tgt = np.asarray(prefixes, dtype=np.int64)
    out, _ = model.decode(enc, tgt, np.zeros(tgt.shape, dtype=bool))
    return _log_softmax(model.logits(out).data[:, -1, :])


def greedy_decode(model: Model, inputs, max_len, eos_id=1, pad_id=0):
    """Argmax decoding for a list of ModelInputs; rows sharing a prefix length are batched."""
    results = [None] * len(inputs)
    groups = {}
    for i, m in enumerate(inputs):
        groups.setdefault(len(_prefix(m)), []).append(i)
    for _, rows in sorted(groups.items()):
        batch = [inputs[i] for i in rows]
        src, src_pad = _pad_sources(batch, pad_id)
        enc = model.encode_source(src, src_pad)
        prefix = np.array([_prefix(m) for m in batch], dtype=np.int64)
        n0 = prefix.shape[1]
        logp = np.zeros(len(batch))
        length = np.zeros(len(batch), dtype=np.int64)
        done = np.zeros(len(batch), dtype=bool)
        seqs = prefix
        for _ in range(max_len):
            live = np.flatnonzero(~done)
            if live.size == 0:
                break
            lp = _next_logprobs(model, _select(enc, live), seqs[live])
            tok = lp.argmax(axis=-1)  # first maximum, i.e. lowest id on ties
            step = np.full(len(batch), pad_id, dtype=np.int64)
            step[live] = tok
            logp[live] += lp[np.arange(live.size), tok]
            length[live] += 1
            done[live[tok == eos_id]] = True
            seqs = np.concatenate([seqs, step[:, None]], axis=1)
        for j, i in enumerate(rows):
            gen = [int(t) for t in seqs[j, n0 : n0 + length[j]]]
            fin = bool(done[j])
            if fin:
                gen = gen[:-1]
            results[i] = Hypothesis(tuple(gen), float(logp[j]), int(length[j]), fin)
    return results


def beam_decode(model: Model, inputs, beam, max_len, eos_id=1, pad_id=0, alpha=1.0):
    """Length-normalized beam search; ``beam == 1`` delegates to greedy decoding.

    Each step extends every live hypothesis, ranks the ``2 * beam`` best
    extensions by cumulative log-probability (ties go to the lower token
    id), moves those ending in [eos] among the top ``beam`` to the finished
    pool and keeps the best ``beam`` others alive.  Search ends when the
    pool holds ``beam`` hypotheses or ``max_len`` tokens were generated; the
    highest normalized score wins.  The greedy hypothesis also competes, so
    the result never scores below greedy decoding.
    """
    if beam < 1:
        raise ValueError("beam must be >= 1")
    greedy = greedy_decode(model, inputs, max_len, eos_id, pad_id)
    if beam == 1:
        return greedy
    results = [None] * len(inputs)
    groups = {}
    for i, m in enumerate(inputs):
        groups.setdefault(len(_prefix(m)), []).append(i)
    for _, rows in sorted(groups.items()):
        batch = [inputs[i] for i in rows]
        src, src_pad = _pad_sources(batch, pad_id)
        enc = model.encode_source(src, src_pad)
        for i, hyp in zip(rows, _beam_batch(model, enc, [_prefix(m) for m in batch], beam, max_len, eos_id, alpha)):
            g = greedy[i]
            better = length_normalized(g.logprob, g.length, alpha) > length_normalized(hyp.logprob, hyp.length, alpha)
            results[i] = g if better else hyp
    return results


def _beam_batch(model, enc, prefixes, k, max_len, eos_id, alpha):
    n0 = len(prefixes[0])
    alive = [[(tuple(p), 0.0)] for p in prefixes]
    finished = [[] for _ in prefixes]
    open_ = list(range(len(prefixes)))
    for step in range(1, max_len + 1):
        owner = [i for i in open_ for _ in alive[i]]
        seqs = [s for i in open_ for s, _ in alive[i]]
        lp = _next_logprobs(model, _select(enc, np.asarray(owner)), seqs)
        v = lp.shape[1]
        r = 0
        still = []
        for i in open_:
            n = len(alive[i])
            total = np.array([sc for _, sc in alive[i]])[:, None] + lp[r : r + n]
            r += n
            flat = total.reshape(-1)
            order = np.lexsort((np.tile(np.arange(v), n), -flat))[: 2 * k]
            nxt = []
            for rank, idx in enumerate(order):
                b, t = divmod(int(idx), v)
                seq, sc = alive[i][b][0] + (t,), float(flat[idx])
                if t == eos_id:
                    if rank < k:
                        finished[i].append(Hypothesis(seq[n0:-1], sc, step, True))
                elif len(nxt) < k:
                    nxt.append((seq, sc))
            alive[i] = nxt
            if len(finished[i]) < k and nxt:
                still.append(i)
        open_ = still
        if not open_:
            break
    out = []
    for i in range(len(prefixes)):
        pool = finished[i]
        if i in open_ or not pool:
            pool = pool + [Hypothesis(s[n0:], sc, len(s) - n0, False) for s, sc in alive[i]]
        best = max(enumerate(pool), key=lambda p: (length_normalized(p[1].logprob, p[1].length, alpha), -p[0]))
        out.append(best[1])
    return out


def sequence_logprob(model: Model, m: ModelInput, tokens, eos_id=1):
    """Summed log-probability of generating ``tokens`` then [eos] (teacher-forced)."""
    prefix = _prefix(m)
    seq = tuple(prefix) + tuple(tokens)
    src = np.asarray([m.source], dtype=np.int64)
    enc = model.encode_source(src, np.zeros(src.shape, dtype=bool))
    tgt = np.asarray([seq], dtype=np.int64)
    out, _ = model.decode(enc, tgt, np.zeros(tgt.shape, dtype=bool))
    lp = _log_softmax(model.logits(out).data[0])
    labels = list(tokens) + [eos_id]
    start = len(prefix) - 1
    return float(sum(lp[start + j, t] for j, t in enumerate(labels)))


def translate(model: Model, inputs, beam=1, max_len=None, eos_id=1, pad_id=0, max_len_a=1.2, max_len_b=10):
    """Decode a list of ModelInputs; ``max_len`` defaults to ``a * |source| + b`` per batch."""
    if max_len is None:
        longest = max(len(m.source) for m in inputs)
        max_len = int(max_len_a * longest + max_len_b)
    return beam_decode(model, inputs, beam, max_len, eos_id, pad_id)
