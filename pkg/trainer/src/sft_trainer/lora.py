"""Low-rank adapter injection over attention projection layers.

Base weights are frozen (optionally stored int8 with per-channel scales);
only the adapter factors train. The B factor starts at zero so an
untrained adapter is an exact no-op.
"""

from __future__ import annotations

import math

import torch
from torch import nn


class Int8Linear(nn.Module):
    """Frozen linear layer with int8 weights, dequantized at forward time."""

    def __init__(self, linear: nn.Linear):
        super().__init__()
        weight = linear.weight.detach()
        scale = weight.abs().amax(dim=1, keepdim=True).clamp(min=1e-8) / 127.0
        self.register_buffer("weight_int8", torch.round(weight / scale).to(torch.int8))
        self.register_buffer("scale", scale)
        self.bias: torch.Tensor | None
        if linear.bias is not None:
            self.register_buffer("bias", linear.bias.detach().clone())
        else:
            self.bias = None
        self.in_features = linear.in_features
        self.out_features = linear.out_features

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        weight = self.weight_int8.to(x.dtype) * self.scale.to(x.dtype)
        return nn.functional.linear(x, weight, self.bias)


class LoraLinear(nn.Module):
    def __init__(self, base: nn.Module, in_features: int, out_features: int,
                 rank: int, alpha: int, dropout: float):
        super().__init__()
        self.base = base
        self.lora_a = nn.Linear(in_features, rank, bias=False)
        self.lora_b = nn.Linear(rank, out_features, bias=False)
        nn.init.kaiming_uniform_(self.lora_a.weight, a=math.sqrt(5))
        nn.init.zeros_(self.lora_b.weight)
        self.scaling = alpha / rank
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.base(x) + self.lora_b(self.lora_a(self.dropout(x))) * self.scaling


def inject_lora(model: nn.Module, targets, rank: int, alpha: int, dropout: float,
                quantize_base: bool = False) -> int:
    """Replace every matching projection with an adapter-wrapped copy.

    Returns the number of modules wrapped; raises if nothing matched.
    """
    matches = [
        (name, module)
        for name, module in model.named_modules()
        if isinstance(module, nn.Linear) and any(name.endswith(t) for t in targets)
    ]
    if not matches:
        raise ValueError(f"no modules matching {tuple(targets)} found to adapt")
    for name, linear in matches:
        parent = model.get_submodule(name.rsplit(".", 1)[0]) if "." in name else model
        attr = name.rsplit(".", 1)[-1]
        base: nn.Module = Int8Linear(linear) if quantize_base else linear
        wrapped = LoraLinear(base, linear.in_features, linear.out_features,
                             rank, alpha, dropout)
        setattr(parent, attr, wrapped)
    return len(matches)


def mark_only_lora_trainable(model: nn.Module) -> int:
    """Freeze everything except adapter factors; returns trainable count."""
    trainable = 0
    for name, param in model.named_parameters():
        if "lora_a" in name or "lora_b" in name:
            param.requires_grad_(True)
            trainable += param.numel()
        else:
            param.requires_grad_(False)
    return trainable


def lora_state_dict(model: nn.Module) -> dict[str, torch.Tensor]:
    return {
        name: tensor
        for name, tensor in model.state_dict().items()
        if "lora_a" in name or "lora_b" in name
    }


def load_lora_state(model: nn.Module, state: dict[str, torch.Tensor]) -> None:
    missing, unexpected = model.load_state_dict(state, strict=False)
    if unexpected:
        raise ValueError(f"unexpected adapter tensors: {unexpected[:3]}")
    remaining = [name for name in missing if "lora_a" in name or "lora_b" in name]
    if remaining:
        raise ValueError(f"checkpoint lacks adapter tensors: {remaining[:3]}")
