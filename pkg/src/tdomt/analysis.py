"""Layer-wise linguistic-preference analysis with SVCCA.

For a direction x -> y and a layer, three sets of pooled source-side
states are compared over the same parallel sentences: the translation
input (tag_y, x), the target identity input (tag_y, y) and the source
identity input (tag_x, x).  Their SVCCA similarities give rho_y and
rho_x, and the preference score is rho_y / (rho_y + rho_x).

Correlations are computed over a set of sentences per direction and
layer.  A single pair of sentence vectors admits no meaningful CCA.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus.assemble import apply_tag_strategy, assemble_model_input, collate
from .corpus.instance import TranslationInstance
from .numerics import cca, retained_rank, svd

MIN_SAMPLES = 8


class AnalysisError(ValueError):
    pass


def sentence_representation(states, pad=None):
    """Mean over source positions: (L, d) -> (d,), or (B, L, d) with pad mask (B, L) -> (B, d)."""
    h = np.asarray(getattr(states, "data", states), dtype=np.float64)
    if h.shape[-2] == 0:
        raise AnalysisError("cannot pool an empty sequence")
    if pad is None:
        return h.mean(axis=-2)
    keep = (~np.asarray(pad, dtype=bool)).astype(np.float64)[..., None]
    count = keep.sum(axis=-2)
    if np.any(count == 0):
        raise AnalysisError("cannot pool a sequence made only of padding")
    return (h * keep).sum(axis=-2) / count


def svd_reduce(x, variance=0.99):
    """Centered data projected onto the leading singular directions that keep ``variance``."""
    xc = x - x.mean(axis=0)
    u, s, _ = svd(xc)
    k = max(retained_rank(s, variance), 1)
    return u[:, :k] * s[:k]


def svcca_correlation(set_a, set_b, variance=0.99):
    """SVCCA similarity in [0, 1] between two sample-aligned representation sets.

    Each side is reduced by SVD, then CCA finds paired projections; the
    result is the normalized inner product of the two projected variate
    matrices, i.e. the mean canonical correlation.
    """
    a = np.asarray(set_a, dtype=np.float64)
    b = np.asarray(set_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[0]:
        raise AnalysisError(f"need two sample-aligned matrices, got {a.shape} and {b.shape}")
    if a.shape[0] < MIN_SAMPLES:
        raise AnalysisError(f"SVCCA needs at least {MIN_SAMPLES} samples, got {a.shape[0]}")
    ra, rb = svd_reduce(a, variance), svd_reduce(b, variance)
    wa, wb, _ = cca(ra, rb)
    za = (ra - ra.mean(axis=0)) @ wa.T
    zb = (rb - rb.mean(axis=0)) @ wb.T
    denom = np.linalg.norm(za) * np.linalg.norm(zb)
    if denom == 0:
        return 0.0
    return float(np.clip(np.sum(za * zb) / denom, 0.0, 1.0))


def preference_score(rho_y, rho_x):
    """rho_y / (rho_y + rho_x); None when both correlations are zero."""
    if rho_y < 0 or rho_x < 0:
        raise AnalysisError("correlations must be nonnegative")
    total = rho_y + rho_x
    if total == 0:
        return None
    return rho_y / total


@dataclass
class PreferenceReport:
    rows: list  # (layer, "src-tgt", rho_x, rho_y, score or None)
    meta: dict = field(default_factory=dict)

    def layers(self):
        return sorted({r[0] for r in self.rows})

    def summary(self):
        """Per layer: mean/min/max score over directions with a defined score."""
        out = {}
        for layer in self.layers():
            scores = [r[4] for r in self.rows if r[0] == layer and r[4] is not None]
            if scores:
                out[layer] = {"mean": float(np.mean(scores)), "min": float(min(scores)),
                              "max": float(max(scores)), "n": len(scores)}
            else:
                out[layer] = {"mean": None, "min": None, "max": None, "n": 0}
        return out

    def mean(self, layer):
        return self.summary()[layer]["mean"]

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["layer", "direction", "rho_x", "rho_y", "score"])
            for layer, direction, rx, ry, s in self.rows:
                w.writerow([layer, direction, f"{rx:.8f}", f"{ry:.8f}", "" if s is None else f"{s:.8f}"])

    def write_json(self, path):
        payload = {"meta": self.meta, "layers": {str(k): v for k, v in self.summary().items()}}
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _pooled_states(model, sources, tgt_lang, vocab, strategy, batch_size=64):
    """layer -> (s, d) pooled source states for inputs (tag_tgt, source)."""
    tag = vocab.tag(tgt_lang)
    arch = model.config.architecture
    inputs = []
    for src in sources:
        inst = TranslationInstance(tag, src, src, vocab.detect_language(src), tgt_lang)
        inputs.append(assemble_model_input(apply_tag_strategy(inst, strategy, vocab), arch, vocab.eos_id))
    per_layer = {}
    for start in range(0, len(inputs), batch_size):
        b = collate(inputs[start : start + batch_size])
        states = model.source_states(b.src, b.src_pad)
        for layer in states.layers():
            per_layer.setdefault(layer, []).append(states.pooled(layer))
    return {k: np.concatenate(v, axis=0) for k, v in per_layer.items()}


def layerwise_preference(model, parallel: dict, directions, vocab, strategy=None, set_size=128,
                         include_identity=False, variance=0.99):
    """PreferenceReport over ``directions`` using the multi-way ``parallel`` set.

    ``parallel`` maps a language to its list of token sequences; entry i is
    the same sentence in every language.
    """
    strategy = model.config.tag_strategy if strategy is None else strategy
    cache = {}

    def states(src_lang, tgt_lang):
        key = (src_lang, tgt_lang)
        if key not in cache:
            cache[key] = _pooled_states(model, parallel[src_lang][:set_size], tgt_lang, vocab, strategy)
        return cache[key]

    rows = []
    for x, y in directions:
        if x not in parallel or y not in parallel:
            raise AnalysisError(f"direction {x}->{y} is not covered by the parallel set")
        if x == y and not include_identity:
            continue
        translate, target_id, source_id = states(x, y), states(y, y), states(x, x)
        for layer in sorted(translate):
            rho_y = svcca_correlation(translate[layer], target_id[layer], variance)
            rho_x = svcca_correlation(translate[layer], source_id[layer], variance)
            rows.append((layer, f"{x}-{y}", rho_x, rho_y, preference_score(rho_y, rho_x)))
    rows.sort(key=lambda r: (r[0], r[1]))
    meta = {"architecture": model.config.architecture, "mask_mode": model.config.mask_mode,
            "directions": [f"{x}-{y}" for x, y in directions], "set_size": set_size}
    return PreferenceReport(rows, meta)


def parallel_set(corpus):
    """Language -> rendered parallel sentences from a generated or loaded corpus."""
    from .corpus.generate import Renderer

    r = corpus.renderer or Renderer(corpus.config)
    return {lang: [r.render(c, lang) for c in corpus.parallel] for lang in corpus.config.names}
