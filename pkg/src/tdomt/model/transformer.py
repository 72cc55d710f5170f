"""Transformer stacks for the encoder-decoder, decoder-only and two-stage models.

All three share one embedding table (input, output projection) and the
same sublayer code; they differ in which positions each layer sees.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import numerics as nx
from ..numerics import Tensor
from .config import ModelConfig
from .masks import attention_bias, bidirectional_mask, build_mask, sinusoid


class ArchitectureError(ValueError):
    pass


@dataclass
class LayerStates:
    """Per-layer hidden states, 1-based layer index -> Tensor (B, L, d).

    For layers that process the joint stream ``L`` covers the source block
    followed by the target block; ``source(layer)`` slices the source part.
    """

    hidden: dict = field(default_factory=dict)
    source_len: int = 0
    source_pad: np.ndarray | None = None
    target: Tensor | None = None

    def layers(self):
        return sorted(self.hidden)

    def source(self, layer):
        if layer not in self.hidden:
            raise KeyError(f"layer {layer} was not recorded (have {self.layers()})")
        h = self.hidden[layer]
        if h.shape[1] == self.source_len:
            return h
        return h[:, : self.source_len, :]

    def pooled(self, layer):
        """Average of source-position states over non-pad positions, as a numpy array (B, d)."""
        h = self.source(layer).data.astype(np.float64)
        if self.source_pad is None:
            return h.mean(axis=1)
        keep = (~self.source_pad).astype(np.float64)[:, :, None]
        return (h * keep).sum(axis=1) / keep.sum(axis=1)


@dataclass
class SourceEncoding:
    """Output of the source-only part of a model (encoder or first stage)."""

    states: Tensor
    pad: np.ndarray
    layers: LayerStates


def positional_encode(token_embeddings, role):
    """Add sinusoidal positions; every role's positions start at zero."""
    if role not in ("source", "target"):
        raise ValueError(f"role must be 'source' or 'target', got {role!r}")
    length, d = token_embeddings.shape[-2], token_embeddings.shape[-1]
    return nx.add(token_embeddings, Tensor(sinusoid(length, d, token_embeddings.dtype)))


class Model:
    def __init__(self, config: ModelConfig, seed=0, dtype=np.float32):
        if config.vocab_size < 1:
            raise ArchitectureError("config.vocab_size must be set before building a model")
        self.config = config
        self.dtype = np.dtype(dtype)
        self.params: dict[str, Tensor] = {}
        self._rng = np.random.default_rng(seed)
        self._build()
        del self._rng

    # ------------------------------------------------------------ parameters
    def _matrix(self, name, fan_in, fan_out):
        bound = math.sqrt(3.0 / fan_in)
        self._add(name, self._rng.uniform(-bound, bound, size=(fan_in, fan_out)))

    def _add(self, name, value):
        self.params[name] = Tensor(np.asarray(value, dtype=self.dtype), requires_grad=True, name=name)

    def _linear(self, prefix, d_in, d_out):
        self._matrix(f"{prefix}.weight", d_in, d_out)
        self._add(f"{prefix}.bias", np.zeros(d_out))

    def _norm(self, prefix, d):
        self._add(f"{prefix}.gain", np.ones(d))
        self._add(f"{prefix}.bias", np.zeros(d))

    def _attention(self, prefix, d):
        for part in ("q", "k", "v", "o"):
            self._linear(f"{prefix}.{part}", d, d)

    def _ffn(self, prefix, d, inner):
        self._linear(f"{prefix}.fc1", d, inner)
        self._linear(f"{prefix}.fc2", inner, d)

    def _build(self):
        c = self.config
        d = c.d_model
        bound = math.sqrt(3.0) * d ** -0.5
        emb = self._rng.uniform(-bound, bound, size=(c.vocab_size, d))
        emb[0] = 0.0  # pad row
        self._add("embed.weight", emb)
        if c.architecture == "encoder_decoder":
            for i in range(1, c.num_layers + 1):
                p = f"encoder.{i}"
                self._attention(f"{p}.self_attn", d)
                self._norm(f"{p}.ln1", d)
                self._ffn(f"{p}.ffn", d, c.ffn1)
                self._norm(f"{p}.ln2", d)
            for i in range(1, c.num_layers + 1):
                p = f"decoder.{i}"
                self._attention(f"{p}.self_attn", d)
                self._norm(f"{p}.ln1", d)
                self._attention(f"{p}.cross_attn", d)
                self._norm(f"{p}.ln2", d)
                self._ffn(f"{p}.ffn", d, c.ffn2)
                self._norm(f"{p}.ln3", d)
            if c.pre_norm:
                self._norm("encoder.final_ln", d)
                self._norm("decoder.final_ln", d)
            return
        for i in range(1, 2 * c.num_layers + 1):
            p = f"layers.{i}"
            self._attention(f"{p}.self_attn", d)
            self._norm(f"{p}.ln1", d)
            self._ffn(f"{p}.ffn", d, c.layer_ffn(i))
            self._norm(f"{p}.ln2", d)
        if c.adaptation:
            self._ffn("adapter_source.ffn", d, c.ffn1)
            self._norm("adapter_source.ln", d)
            self._ffn("adapter_target.ffn", d, c.ffn2)
            self._norm("adapter_target.ln", d)
        if c.pre_norm:
            self._norm("final_ln", d)

    def parameters(self):
        return list(self.params.values())

    def num_parameters(self):
        return int(sum(p.size for p in self.params.values()))

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def state_arrays(self):
        return {k: v.data for k, v in self.params.items()}

    def load_arrays(self, arrays):
        missing = set(self.params) - set(arrays)
        extra = set(arrays) - set(self.params)
        if missing or extra:
            raise ArchitectureError(f"parameter mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for k, arr in arrays.items():
            if arr.shape != self.params[k].shape:
                raise ArchitectureError(f"shape mismatch for {k}: {arr.shape} vs {self.params[k].shape}")
            self.params[k].data = np.array(arr, dtype=self.dtype)

    # ------------------------------------------------------------ sublayers
    def _p(self, name):
        return self.params[name]

    def _lin(self, x, prefix):
        return nx.linear(x, self._p(f"{prefix}.weight"), self._p(f"{prefix}.bias"))

    def _ln(self, x, prefix):
        return nx.layer_norm(x, self._p(f"{prefix}.gain"), self._p(f"{prefix}.bias"), self.config.layer_norm_eps)

    def _mha(self, x, mem, prefix, bias):
        c = self.config
        b, tq, d = x.shape
        tk = mem.shape[1]
        h, dh = c.heads, c.head_dim

        def split(t, n):
            return nx.transpose(nx.reshape(t, (b, n, h, dh)), (0, 2, 1, 3))

        q = split(self._lin(x, f"{prefix}.q"), tq)
        k = split(self._lin(mem, f"{prefix}.k"), tk)
        v = split(self._lin(mem, f"{prefix}.v"), tk)
        scores = nx.mul(nx.matmul(q, nx.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(dh))
        probs = nx.softmax(scores, axis=-1, bias=bias)
        ctx = nx.reshape(nx.transpose(nx.matmul(probs, v), (0, 2, 1, 3)), (b, tq, d))
        return self._lin(ctx, f"{prefix}.o")

    def _ffn_apply(self, x, prefix, rng):
        hid = nx.relu(self._lin(x, f"{prefix}.fc1"))
        return self._lin(hid, f"{prefix}.fc2")

    def _sublayer(self, x, fn, ln_prefix, rng):
        p = self.config.dropout if rng is not None else 0.0
        if self.config.pre_norm:
            return nx.add(x, nx.dropout(fn(self._ln(x, ln_prefix)), p, rng))
        return self._ln(nx.add(x, nx.dropout(fn(x), p, rng)), ln_prefix)

    def _self_layer(self, x, prefix, bias, rng):
        x = self._sublayer(x, lambda t: self._mha(t, t, f"{prefix}.self_attn", bias), f"{prefix}.ln1", rng)
        return self._sublayer(x, lambda t: self._ffn_apply(t, f"{prefix}.ffn", rng), f"{prefix}.ln2", rng)

    def _decoder_layer(self, x, mem, prefix, self_bias, cross_bias, rng):
        x = self._sublayer(x, lambda t: self._mha(t, t, f"{prefix}.self_attn", self_bias), f"{prefix}.ln1", rng)
        x = self._sublayer(x, lambda t: self._mha(t, mem, f"{prefix}.cross_attn", cross_bias), f"{prefix}.ln2", rng)
        return self._sublayer(x, lambda t: self._ffn_apply(t, f"{prefix}.ffn", rng), f"{prefix}.ln3", rng)

    def _adapter(self, x, prefix, rng):
        return self._sublayer(x, lambda t: self._ffn_apply(t, f"{prefix}.ffn", rng), f"{prefix}.ln", rng)

    def _embed(self, ids, role, rng):
        emb = nx.embedding(self._p("embed.weight"), ids)
        x = positional_encode(nx.mul(emb, math.sqrt(self.config.d_model)), role)
        p = self.config.dropout if rng is not None else 0.0
        return nx.dropout(x, p, rng)

    # ------------------------------------------------------------ stacks
    def encode_source(self, src, src_pad, rng=None):
        """Run everything that sees only source positions.

        encoder-decoder: the full encoder; tdo: the first stage (plus source
        adapter); decoder-only: embeddings only.
        """
        c = self.config
        src = np.asarray(src, dtype=np.int64)
        src_pad = np.asarray(src_pad, dtype=bool)
        s = src.shape[1]
        states = LayerStates(source_len=s, source_pad=src_pad)
        x = self._embed(src, "source", rng)
        if c.architecture == "decoder_only":
            return SourceEncoding(x, src_pad, states)
        if c.architecture == "encoder_decoder":
            bias = attention_bias(bidirectional_mask(s), src_pad, self.dtype)
            for i in range(1, c.num_layers + 1):
                x = self._self_layer(x, f"encoder.{i}", bias, rng)
                states.hidden[i] = x
            if c.pre_norm:
                x = self._ln(x, "encoder.final_ln")
                states.hidden[c.num_layers] = x
            return SourceEncoding(x, src_pad, states)
        bias = attention_bias(build_mask(c.mask_mode, s, 0, "stage1"), src_pad, self.dtype)
        for i in range(1, c.stage1_layers + 1):
            x = self._self_layer(x, f"layers.{i}", bias, rng)
            states.hidden[i] = x
        if c.adaptation:
            x = self._adapter(x, "adapter_source", rng)
            states.hidden[c.stage1_layers] = x
        return SourceEncoding(x, src_pad, states)

    def decode(self, enc: SourceEncoding, tgt, tgt_pad, rng=None, upto_layer=None):
        """Return target-position hidden states and the full LayerStates.

        ``upto_layer`` stops after that (1-based) layer; the returned target
        states are then None.  Used for collecting instruction states.
        """
        c = self.config
        tgt = np.asarray(tgt, dtype=np.int64)
        tgt_pad = np.asarray(tgt_pad, dtype=bool)
        states = enc.layers
        s, t = enc.states.shape[1], tgt.shape[1]
        if upto_layer is not None and upto_layer in states.hidden and c.architecture != "decoder_only":
            if c.architecture == "encoder_decoder" or upto_layer <= c.stage1_layers:
                return None, states
        y = self._embed(tgt, "target", rng)
        if c.architecture == "encoder_decoder":
            self_bias = attention_bias(np.tril(np.ones((t, t), dtype=bool)), tgt_pad, self.dtype)
            cross_bias = attention_bias(np.ones((t, s), dtype=bool), enc.pad, self.dtype)
            for i in range(1, c.num_layers + 1):
                y = self._decoder_layer(y, enc.states, f"decoder.{i}", self_bias, cross_bias, rng)
            if c.pre_norm:
                y = self._ln(y, "decoder.final_ln")
            states.target = y
            return y, states
        first = 1 if c.architecture == "decoder_only" else c.stage1_layers + 1
        last = 2 * c.num_layers
        x = nx.concat([enc.states, y], axis=1)
        pad = np.concatenate([enc.pad, tgt_pad], axis=1)
        bias = attention_bias(build_mask(c.mask_mode, s, t, "stage2"), pad, self.dtype)
        for i in range(first, last + 1):
            x = self._self_layer(x, f"layers.{i}", bias, rng)
            states.hidden[i] = x
            if upto_layer is not None and i >= upto_layer:
                return None, states
        if c.pre_norm:
            x = self._ln(x, "final_ln")
            states.hidden[last] = x
        out = x[:, s:, :]
        if c.adaptation:
            out = self._adapter(out, "adapter_target", rng)
        states.target = out
        return out, states

    def logits(self, target_states):
        return nx.matmul(target_states, nx.transpose(self._p("embed.weight"), (1, 0)))

    def forward(self, src, src_pad, tgt, tgt_pad, rng=None):
        enc = self.encode_source(src, src_pad, rng)
        out, states = self.decode(enc, tgt, tgt_pad, rng)
        return self.logits(out), states

    def source_states(self, src, src_pad, upto_layer=None, rng=None):
        """Source-position LayerStates without any target tokens."""
        enc = self.encode_source(src, src_pad, rng)
        empty = np.zeros((src.shape[0], 0), dtype=np.int64)
        _, states = self.decode(enc, empty, empty.astype(bool), rng, upto_layer=upto_layer or self.config.total_layers)
        return states


def collect_instruction_state(states: LayerStates, layer):
    """Hidden state at the first source position (the instruction tag) of ``layer``; shape (B, d)."""
    return states.source(layer)[:, 0, :]
