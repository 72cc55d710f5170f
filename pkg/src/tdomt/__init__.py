"""Multilingual NMT lab: encoder-decoder, decoder-only and two-stage decoder-only
models with instruction-level contrastive learning and SVCCA preference analysis."""

__version__ = "0.1.0"
