"""Transformer assemblies: encoder-decoder, decoder-only (causal/prefix) and two-stage."""
from .checkpoint import CheckpointError, load_arrays, load_model, save_arrays, save_model
from .config import ARCHITECTURES, MASK_MODES, ConfigError, ModelConfig
from .forward import forward_decoder_only, forward_encoder_decoder, forward_tdo, forward_instance
from .masks import attention_bias, build_mask, sinusoid
from .params import count_parameters, parameter_breakdown
from .transformer import (
    ArchitectureError,
    LayerStates,
    Model,
    SourceEncoding,
    collect_instruction_state,
    positional_encode,
)
