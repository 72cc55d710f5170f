"""Single-instance entry points for each architecture."""
import numpy as np

from .transformer import ArchitectureError, Model


def forward_instance(model: Model, source, target_prefix, rng=None):
    """Logits (T, V) for one assembled instance and its LayerStates.

    ``source`` is the full source block (tags and trailing [eos] included);
    ``target_prefix`` starts with the decoding trigger.
    """
    src = np.asarray(source, dtype=np.int64)[None, :]
    tgt = np.asarray(target_prefix, dtype=np.int64)[None, :]
    logits, states = model.forward(src, np.zeros_like(src, dtype=bool), tgt, np.zeros_like(tgt, dtype=bool), rng)
    return logits[0], states


def _check(model, arch):
    if model.config.architecture != arch:
        raise ArchitectureError(f"model is {model.config.architecture}, expected {arch}")


def forward_encoder_decoder(model, source, target_prefix, rng=None):
    _check(model, "encoder_decoder")
    return forward_instance(model, source, target_prefix, rng)


def forward_decoder_only(model, source, target_prefix, rng=None):
    _check(model, "decoder_only")
    return forward_instance(model, source, target_prefix, rng)


def forward_tdo(model, source, target_prefix, rng=None):
    _check(model, "tdo")
    return forward_instance(model, source, target_prefix, rng)
