"""Low-rank adapter injection for named linear projections.

A LoRALinear wraps a frozen base Linear with a rank-r bypass
(B @ A, scaled by alpha/r, dropout on the bypass input). B starts at zero
so injection is exactly identity-preserving until training moves it.
"""

from __future__ import annotations

import json
from pathlib import Path

import torch
from torch import nn

DEFAULT_TARGETS = ("q_proj", "k_proj", "v_proj", "o_proj")


class LoRALinear(nn.Module):
    def __init__(self, base: nn.Linear, r: int, alpha: float, dropout: float):
        super().__init__()
        if r < 1:
            raise ValueError("rank must be >= 1")
        self.base = base
        self.lora_A = nn.Linear(base.in_features, r, bias=False)
        self.lora_B = nn.Linear(r, base.out_features, bias=False)
        self.dropout = nn.Dropout(dropout)
        self.scaling = alpha / r
        nn.init.kaiming_uniform_(self.lora_A.weight, a=5 ** 0.5)
        nn.init.zeros_(self.lora_B.weight)
        self.base.weight.requires_grad_(False)
        if self.base.bias is not None:
            self.base.bias.requires_grad_(False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.base(x) + self.lora_B(self.lora_A(self.dropout(x))) * self.scaling


def inject_adapters(
    model: nn.Module,
    targets: tuple[str, ...] = DEFAULT_TARGETS,
    r: int = 32,
    alpha: float = 32.0,
    dropout: float = 0.05,
) -> int:
    """Replace every targeted Linear in-place; freeze everything else.

    Returns the number of modules wrapped. Raises if nothing matched, which
    almost always means the target names do not fit the model.
    """
    for param in model.parameters():
        param.requires_grad_(False)

    wrapped = 0
    for module in list(model.modules()):
        for name, child in list(module.named_children()):
            if name in targets and isinstance(child, nn.Linear):
                setattr(module, name, LoRALinear(child, r, alpha, dropout))
                wrapped += 1
    if wrapped == 0:
        raise ValueError(f"no linear modules matched targets {targets}")
    return wrapped


def adapter_state(model: nn.Module) -> dict[str, torch.Tensor]:
    """Only the adapter tensors, keyed by their qualified parameter names."""
    return {
        name: tensor.detach().clone()
        for name, tensor in model.state_dict().items()
        if "lora_A" in name or "lora_B" in name
    }


def trainable_parameters(model: nn.Module):
    return (p for p in model.parameters() if p.requires_grad)


def save_adapter(model: nn.Module, out_dir: str | Path, config_echo: dict) -> Path:
    """Write adapter weights plus the adapter configuration that built them."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    state = adapter_state(model)
    if not state:
        raise ValueError("model carries no adapter tensors")
    torch.save(state, out / "adapter_model.pt")
    (out / "adapter_config.json").write_text(
        json.dumps(config_echo, indent=2) + "\n", encoding="utf-8"
    )
    return out
