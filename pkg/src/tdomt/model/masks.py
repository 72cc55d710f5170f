"""Attention visibility masks and sinusoidal position tables.

Masks are boolean with ``True`` meaning visible.  The single-stack layout is
a source block followed by a target block; positions restart at zero in
each block.
"""
from functools import lru_cache

import numpy as np

STAGES = ("full", "stage1", "stage2")


def build_mask(mode, source_len, target_len=0, stage="full"):
    """Visibility matrix for a ``source_len`` + ``target_len`` stream.

    ``stage1`` drops all target rows and columns.  ``stage2`` is the joint
    mask over source and target, identical to ``full``.
    """
    if source_len < 0 or target_len < 0:
        raise ValueError(f"negative lengths: source={source_len}, target={target_len}")
    if mode not in ("causal", "prefix"):
        raise ValueError(f"unknown mask mode {mode!r}")
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}")
    if stage == "stage1":
        target_len = 0
    n = source_len + target_len
    mask = np.tril(np.ones((n, n), dtype=bool))
    if mode == "prefix":
        mask[:source_len, :source_len] = True
    return mask


def bidirectional_mask(n):
    return np.ones((n, n), dtype=bool)


def attention_bias(visible, key_pad=None, dtype=np.float32):
    """Turn a visibility matrix (and optional (B, Tk) key padding) into an additive bias.

    Result broadcasts against scores of shape (B, heads, Tq, Tk).
    """
    vis = visible[None, None, :, :]
    if key_pad is not None:
        vis = vis & ~key_pad[:, None, None, :]
    bias = np.zeros(vis.shape, dtype=dtype)
    bias[~vis] = -np.inf
    return bias


@lru_cache(maxsize=16)
def _sinusoid_table(length, d, dtype_name):
    pos = np.arange(length, dtype=np.float64)[:, None]
    i = np.arange(d, dtype=np.float64)[None, :]
    rates = 1.0 / np.power(10000.0, (2 * (i // 2)) / d)
    angles = pos * rates
    table = np.where(i % 2 == 0, np.sin(angles), np.cos(angles))
    table = table.astype(dtype_name)
    table.setflags(write=False)
    return table


def sinusoid(length, d, dtype=np.float32):
    """Positions 0..length-1; one table serves source and target, indices restart per block."""
    cap = max(256, -(-int(length) // 256) * 256)
    return _sinusoid_table(cap, int(d), np.dtype(dtype).name)[:length]
