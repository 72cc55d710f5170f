from __future__ import annotations

from dataclasses import asdict, dataclass, fields

ARCHITECTURES = ("encoder_decoder", "decoder_only", "tdo")
MASK_MODES = ("causal", "prefix")


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    """Architecture hyper-parameters.

    ``num_layers`` is the per-side depth: an encoder-decoder has
    ``num_layers`` encoder plus ``num_layers`` decoder layers, while the
    decoder-only family stacks ``2 * num_layers`` layers.  For the two-stage
    model, ``stage1_layers`` of them see only source positions.
    """

    architecture: str = "tdo"
    mask_mode: str = "prefix"
    num_layers: int = 2
    stage1_layers: int = 2
    d_model: int = 64
    heads: int = 4
    ffn_inner_stage1: int | None = None
    ffn_inner_stage2: int | None = None
    adaptation: bool = False
    instrucl_layer: int | None = None
    tag_strategy: int = 1
    dropout: float = 0.1
    label_smoothing: float = 0.1
    vocab_size: int = 0
    pre_norm: bool = False
    layer_norm_eps: float = 1e-5

    def __post_init__(self):
        self.validate()

    @property
    def total_layers(self):
        """Layers whose source-position states are recorded."""
        if self.architecture == "encoder_decoder":
            return self.num_layers
        return 2 * self.num_layers

    @property
    def ffn1(self):
        return self.ffn_inner_stage1 if self.ffn_inner_stage1 is not None else 4 * self.d_model

    @property
    def ffn2(self):
        return self.ffn_inner_stage2 if self.ffn_inner_stage2 is not None else 4 * self.d_model

    @property
    def head_dim(self):
        return self.d_model // self.heads

    def layer_ffn(self, layer):
        """FFN inner size of (1-based) stack layer ``layer`` for single-stack models."""
        boundary = self.stage1_layers if self.architecture == "tdo" else self.num_layers
        return self.ffn1 if layer <= boundary else self.ffn2

    def validate(self):
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"architecture must be one of {ARCHITECTURES}, got {self.architecture!r}")
        if self.mask_mode not in MASK_MODES:
            raise ConfigError(f"mask_mode must be one of {MASK_MODES}, got {self.mask_mode!r}")
        if self.num_layers < 1:
            raise ConfigError("num_layers must be >= 1")
        if self.d_model < 1 or self.heads < 1 or self.d_model % self.heads:
            raise ConfigError(f"d_model={self.d_model} must be divisible by heads={self.heads}")
        if self.architecture == "tdo" and not 1 <= self.stage1_layers < 2 * self.num_layers:
            raise ConfigError(
                f"tdo needs 1 <= stage1_layers < {2 * self.num_layers}, got {self.stage1_layers}"
            )
        if self.adaptation and self.architecture != "tdo":
            raise ConfigError("adaptation modules are only defined for the tdo architecture")
        if self.instrucl_layer is not None and not 1 <= self.instrucl_layer <= self.total_layers:
            raise ConfigError(
                f"instrucl_layer must be in 1..{self.total_layers} for {self.architecture}, "
                f"got {self.instrucl_layer}"
            )
        if self.tag_strategy not in (1, 2, 3, 4, 5):
            raise ConfigError(f"tag_strategy must be 1..5, got {self.tag_strategy}")
        for name in ("dropout", "label_smoothing"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ConfigError(f"{name} must be in [0, 1), got {v}")
        for name in ("ffn_inner_stage1", "ffn_inner_stage2"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ConfigError(f"{name} must be positive")
        if self.vocab_size < 0:
            raise ConfigError("vocab_size must be positive")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown model config fields: {sorted(unknown)}")
        return cls(**data)
