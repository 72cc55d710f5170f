"""Closed-form learnable-parameter counts.

Matches the tensors built by :class:`~tdomt.model.transformer.Model`
exactly.  ``core_only`` keeps just the d x d / d x inner weight matrices of
the layers (no embeddings, biases or norms), which is the accounting used
for the 28d^2 vs 24d^2 comparison.
"""
from .config import ModelConfig


def _attention(d, core):
    return 4 * d * d if core else 4 * d * d + 4 * d


def _ffn(d, inner, core):
    return 2 * d * inner if core else 2 * d * inner + inner + d


def _norm(d, core):
    return 0 if core else 2 * d


def parameter_breakdown(config: ModelConfig, core_only=False):
    """Ordered mapping component -> parameter count."""
    c = config
    d = c.d_model
    parts = {}
    if not core_only:
        parts["embeddings"] = c.vocab_size * d
    if c.architecture == "encoder_decoder":
        enc = _attention(d, core_only) + _ffn(d, c.ffn1, core_only) + 2 * _norm(d, core_only)
        dec = 2 * _attention(d, core_only) + _ffn(d, c.ffn2, core_only) + 3 * _norm(d, core_only)
        parts["encoder_layers"] = c.num_layers * enc
        parts["decoder_layers"] = c.num_layers * dec
        if c.pre_norm and not core_only:
            parts["final_norms"] = 2 * _norm(d, False)
        return parts
    layers = 0
    for i in range(1, 2 * c.num_layers + 1):
        layers += _attention(d, core_only) + _ffn(d, c.layer_ffn(i), core_only) + 2 * _norm(d, core_only)
    if c.architecture == "tdo":
        first = sum(
            _attention(d, core_only) + _ffn(d, c.layer_ffn(i), core_only) + 2 * _norm(d, core_only)
            for i in range(1, c.stage1_layers + 1)
        )
        parts["stage1_layers"] = first
        parts["stage2_layers"] = layers - first
    else:
        parts["layers"] = layers
    if c.adaptation:
        parts["adapters"] = (
            _ffn(d, c.ffn1, core_only) + _norm(d, core_only) + _ffn(d, c.ffn2, core_only) + _norm(d, core_only)
        )
    if c.pre_norm and not core_only:
        parts["final_norms"] = _norm(d, False)
    return parts


def count_parameters(config: ModelConfig, core_only=False):
    return int(sum(parameter_breakdown(config, core_only).values()))
