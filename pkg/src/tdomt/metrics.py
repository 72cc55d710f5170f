"""Translation metrics over token sequences.

BLEU and chrF operate on surface strings (tokens joined by spaces), so
they match what a text-level scorer would report for the synthetic
languages.  The off-target detector relies on the disjoint alphabets.
"""
from __future__ import annotations

import math
from collections import Counter

GROUPS = ("en->", "->en", "zero-shot")


def token_accuracy(hyps, refs):
    """Position-wise matches over the longer side, pooled across the corpus."""
    _check(hyps, refs)
    hit = total = 0
    for h, r in zip(hyps, refs):
        hit += sum(a == b for a, b in zip(h, r))
        total += max(len(h), len(r))
    return hit / total if total else 1.0


def exact_match(hyps, refs):
    _check(hyps, refs)
    if not refs:
        return 1.0
    return sum(tuple(h) == tuple(r) for h, r in zip(hyps, refs)) / len(refs)


def _check(hyps, refs):
    if len(hyps) != len(refs):
        raise ValueError(f"{len(hyps)} hypotheses vs {len(refs)} references")


def _ngrams(seq, n):
    return Counter(tuple(seq[i : i + n]) for i in range(len(seq) - n + 1))


def bleu_stats(hyp, ref, max_order=4):
    """(matches[n], totals[n], hyp_len, ref_len) for one sentence."""
    matches = [0] * max_order
    totals = [0] * max_order
    for n in range(1, max_order + 1):
        h, r = _ngrams(hyp, n), _ngrams(ref, n)
        matches[n - 1] = sum(min(c, r[g]) for g, c in h.items())
        totals[n - 1] = max(len(hyp) - n + 1, 0)
    return matches, totals, len(hyp), len(ref)


def corpus_bleu(hyps, refs, max_order=4):
    """Corpus BLEU (0-100): clipped n-gram precisions up to ``max_order``, geometric mean, brevity penalty."""
    _check(hyps, refs)
    m = [0] * max_order
    t = [0] * max_order
    hl = rl = 0
    for h, r in zip(hyps, refs):
        a, b, x, y = bleu_stats(list(h), list(r), max_order)
        m = [p + q for p, q in zip(m, a)]
        t = [p + q for p, q in zip(t, b)]
        hl += x
        rl += y
    if hl == 0 or min(m) == 0:
        return 0.0
    log_p = sum(math.log(mi / ti) for mi, ti in zip(m, t)) / max_order
    bp = 1.0 if hl > rl else math.exp(1.0 - rl / hl)
    return 100.0 * bp * math.exp(log_p)


def _char_ngrams(text, n):
    s = text.replace(" ", "")
    return Counter(s[i : i + n] for i in range(len(s) - n + 1))


def corpus_chrf(hyps, refs, char_order=6, word_order=0, beta=2.0):
    """Character n-gram F-score (0-100); ``word_order=2`` gives chrF++.

    Hypotheses and references are strings.  Matches and counts are pooled
    over the corpus per order; precision and recall are averaged over all
    orders before the F-beta combination.
    """
    _check(hyps, refs)
    orders = [("c", n) for n in range(1, char_order + 1)] + [("w", n) for n in range(1, word_order + 1)]
    prec, rec = [], []
    for kind, n in orders:
        match = hyp_total = ref_total = 0
        for h, r in zip(hyps, refs):
            if kind == "c":
                hc, rc = _char_ngrams(h, n), _char_ngrams(r, n)
            else:
                hc, rc = _ngrams(h.split(), n), _ngrams(r.split(), n)
            match += sum(min(c, rc[g]) for g, c in hc.items())
            hyp_total += sum(hc.values())
            ref_total += sum(rc.values())
        if hyp_total == 0 and ref_total == 0:
            continue
        prec.append(match / hyp_total if hyp_total else 0.0)
        rec.append(match / ref_total if ref_total else 0.0)
    if not prec:
        return 100.0
    p, r = sum(prec) / len(prec), sum(rec) / len(rec)
    if p == 0 and r == 0:
        return 0.0
    b2 = beta * beta
    return 100.0 * (1 + b2) * p * r / (b2 * p + r)


def off_target_ratio(hyps, target_langs, vocab):
    """Fraction of hypotheses whose detected language is not the requested one (empty output counts)."""
    if len(hyps) != len(target_langs):
        raise ValueError("one target language per hypothesis required")
    if not hyps:
        return 0.0
    return sum(vocab.detect_language(h) != lang for h, lang in zip(hyps, target_langs)) / len(hyps)


def direction_group(src, tgt, center="en"):
    """Exactly one of 'en->', '->en', 'zero-shot'."""
    if src == tgt:
        raise ValueError(f"identity direction {src}->{tgt} has no group")
    if src == center:
        return "en->"
    if tgt == center:
        return "->en"
    return "zero-shot"


def score_direction(hyps, refs, tgt_lang, vocab):
    """All metrics for one translation direction; ``hyps``/``refs`` are token-id sequences."""
    hs = [" ".join(vocab.decode(h)) for h in hyps]
    rs = [" ".join(vocab.decode(r)) for r in refs]
    words_h = [vocab.decode(h) for h in hyps]
    words_r = [vocab.decode(r) for r in refs]
    return {
        "n": len(refs),
        "token_accuracy": token_accuracy(hyps, refs),
        "exact_match": exact_match(hyps, refs),
        "bleu": corpus_bleu(words_h, words_r),
        "chrf": corpus_chrf(hs, rs),
        "chrf++": corpus_chrf(hs, rs, word_order=2),
        "off_target": off_target_ratio(hyps, [tgt_lang] * len(hyps), vocab),
    }


METRIC_NAMES = ("token_accuracy", "exact_match", "bleu", "chrf", "chrf++", "off_target")


def aggregate(per_direction: dict, center="en"):
    """Mean of each metric over the directions of each group (and over all directions)."""
    buckets = {g: [] for g in GROUPS}
    for (src, tgt), scores in per_direction.items():
        buckets[direction_group(src, tgt, center)].append(scores)
    out = {}
    for g, rows in list(buckets.items()) + [("all", list(per_direction.values()))]:
        if rows:
            out[g] = {k: sum(r[k] for r in rows) / len(rows) for k in METRIC_NAMES}
    return out
