"""Training configuration with the documented hyperparameter defaults."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

DECODER_ONLY = "decoder-only"
ENCODER_DECODER = "encoder-decoder"

# (learning rate, optimizer, epochs) per architecture family
_KIND_DEFAULTS = {
    DECODER_ONLY: (1e-4, "adamw", 1),
    ENCODER_DECODER: (5e-4, "adafactor", 3),
}


@dataclass(frozen=True)
class TrainConfig:
    base_model: str = "tiny-decoder"
    model_kind: str = DECODER_ONLY
    precision: str = "fp16"  # half precision on CUDA; CPU always computes in fp32
    lora_rank: int = 128
    lora_alpha: int = 256
    lora_targets: tuple[str, ...] = ("q_proj", "k_proj", "v_proj")
    lora_dropout: float = 0.1
    learning_rate: float | None = None  # resolved from model_kind when unset
    scheduler: str = "constant"
    batch_size: int = 32
    max_grad_norm: float = 0.3
    warmup_ratio: float = 0.03
    epochs: int | None = None  # resolved from model_kind when unset
    optimizer: str | None = None  # resolved from model_kind when unset
    weight_decay: float = 0.0
    max_seq_len: int = 512  # not part of the documented list; configurable
    quantize_base: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.model_kind not in _KIND_DEFAULTS:
            raise ValueError(f"model_kind must be one of {sorted(_KIND_DEFAULTS)}")
        for name in ("lora_rank", "lora_alpha", "batch_size", "max_seq_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.lora_dropout < 1.0:
            raise ValueError("lora_dropout must be in [0, 1)")
        if self.max_grad_norm <= 0:
            raise ValueError("max_grad_norm must be positive")
        if not 0.0 <= self.warmup_ratio < 1.0:
            raise ValueError("warmup_ratio must be in [0, 1)")
        if self.learning_rate is not None and self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs is not None and self.epochs < 1:
            raise ValueError("epochs must be positive")

    def resolved(self) -> "TrainConfig":
        """Config with architecture-dependent defaults filled in."""
        lr, opt, epochs = _KIND_DEFAULTS[self.model_kind]
        return dataclasses.replace(
            self,
            learning_rate=self.learning_rate if self.learning_rate is not None else lr,
            optimizer=self.optimizer if self.optimizer is not None else opt,
            epochs=self.epochs if self.epochs is not None else epochs,
        )

    def to_dict(self) -> dict:
        data = dataclasses.asdict(self)
        data["lora_targets"] = list(self.lora_targets)
        return data
