"""Adapter fine-tuning of the built-in causal LM on prompt/output records.

Records come from the orchestrator's dataset emitter: JSONL rows holding
"prompt" and "output" strings. Sequences are byte-tokenized as
prompt SEP output EOS with the loss masked to the output span, then trained
with low-rank adapters on the attention projections.

The configured optimizer name is echoed as requested; when its backing
implementation is unavailable on this device (the paged 8-bit variant needs
CUDA), plain AdamW steps in and the substitution is recorded in the
training log rather than silently hidden.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

import torch
from torch import nn

from .lora import DEFAULT_TARGETS, inject_adapters, save_adapter, trainable_parameters
from .model import EOS_ID, SEP_ID, TinyCausalLM

IGNORE_INDEX = -100

DEFAULT_ADAPTER_CONFIG = {
    "r": 32,
    "lora_alpha": 32,
    "lora_dropout": 0.05,
    "bias": "none",
    "target_modules": list(DEFAULT_TARGETS),
}

DEFAULT_TRAINING_CONFIG = {
    "optimizer": "paged_adamw_8bit",
    "learning_rate": 1.5e-4,
    "lr_scheduler_type": "cosine",
    "warmup_ratio": 0.05,
    "num_train_epochs": 3,
    "per_device_train_batch_size": 1,
    "gradient_accumulation_steps": 8,
    "effective_batch_size": 8,
}


@dataclass
class FinetuneReport:
    adapter_dir: Path
    epoch_losses: list[float]
    optimizer_requested: str
    optimizer_used: str
    optimizer_steps: int
    n_samples: int
    adapter_config: dict = field(default_factory=dict)


def _as_text(value) -> str:
    # Pairwise datasets store prompts as a list of line segments.
    if isinstance(value, list):
        return "\n".join(str(part) for part in value)
    return str(value)


def load_samples(path: str | Path) -> list[tuple[str, str]]:
    samples = []
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            row = json.loads(line)
            if "prompt" not in row or "output" not in row:
                raise ValueError(f"line {line_no}: rows need 'prompt' and 'output'")
            samples.append((_as_text(row["prompt"]), _as_text(row["output"])))
    if not samples:
        raise ValueError(f"no samples in {path}")
    return samples


def encode_sample(prompt: str, output: str, max_seq: int) -> tuple[torch.Tensor, torch.Tensor]:
    """Byte-tokenize one record; labels cover only the output span.

    Long records keep the whole output and as much prompt tail as fits:
    the supervised tokens are the point of the exercise.
    """
    out_ids = list(output.encode("utf-8"))[: max_seq - 3] + [EOS_ID]
    budget = max_seq - len(out_ids) - 1
    prompt_ids = list(prompt.encode("utf-8"))[-budget:] if budget > 0 else []
    ids = prompt_ids + [SEP_ID] + out_ids
    labels = [IGNORE_INDEX] * (len(prompt_ids) + 1) + out_ids
    return torch.tensor(ids, dtype=torch.long), torch.tensor(labels, dtype=torch.long)


def _make_optimizer(requested: str, params, lr: float):
    if requested == "paged_adamw_8bit" and not torch.cuda.is_available():
        return torch.optim.AdamW(params, lr=lr), "adamw_torch"
    if requested in ("adamw", "adamw_torch"):
        return torch.optim.AdamW(params, lr=lr), "adamw_torch"
    if requested == "sgd":
        return torch.optim.SGD(params, lr=lr), "sgd"
    # paged 8-bit on a CUDA box would go through bitsandbytes; this worker
    # targets CPU-capable deployments, so the fallback above is the norm
    return torch.optim.AdamW(params, lr=lr), "adamw_torch"


def _warmup_cosine(step: int, warmup_steps: int, total_steps: int) -> float:
    if step < warmup_steps:
        return (step + 1) / max(1, warmup_steps)
    span = max(1, total_steps - warmup_steps)
    progress = min(1.0, (step - warmup_steps) / span)
    return 0.5 * (1.0 + math.cos(math.pi * progress))


def run_finetune(
    samples: list[tuple[str, str]],
    out_dir: str | Path,
    adapter_config: dict | None = None,
    training_config: dict | None = None,
    seed: int = 0,
    max_seq: int = 384,
    device: str = "cpu",
) -> FinetuneReport:
    """Train adapters over the samples and persist them with a full log."""
    if not samples:
        raise ValueError("no samples to train on")
    adapter_cfg = {**DEFAULT_ADAPTER_CONFIG, **(adapter_config or {})}
    train_cfg = {**DEFAULT_TRAINING_CONFIG, **(training_config or {})}

    epochs = int(train_cfg["num_train_epochs"])
    accum = int(train_cfg["gradient_accumulation_steps"])
    lr = float(train_cfg["learning_rate"])
    warmup_ratio = float(train_cfg["warmup_ratio"])
    if epochs < 1 or accum < 1:
        raise ValueError("epochs and accumulation steps must be positive")

    torch.manual_seed(seed)
    model = TinyCausalLM(max_seq=max_seq).to(torch.device(device))
    inject_adapters(
        model,
        targets=tuple(adapter_cfg["target_modules"]),
        r=int(adapter_cfg["r"]),
        alpha=float(adapter_cfg["lora_alpha"]),
        dropout=float(adapter_cfg["lora_dropout"]),
    )

    optimizer, optimizer_used = _make_optimizer(
        str(train_cfg["optimizer"]), list(trainable_parameters(model)), lr
    )
    micro_per_epoch = len(samples)
    steps_per_epoch = math.ceil(micro_per_epoch / accum)
    total_steps = epochs * steps_per_epoch
    warmup_steps = math.ceil(total_steps * warmup_ratio)
    scheduler = torch.optim.lr_scheduler.LambdaLR(
        optimizer, lambda step: _warmup_cosine(step, warmup_steps, total_steps)
    )

    encoded = [encode_sample(p, o, max_seq) for p, o in samples]
    loss_fn = nn.CrossEntropyLoss(ignore_index=IGNORE_INDEX)
    order_rng = random.Random(seed)

    model.train()
    epoch_losses = []
    optimizer_steps = 0
    for _ in range(epochs):
        order = list(range(len(encoded)))
        order_rng.shuffle(order)
        optimizer.zero_grad()
        running = 0.0
        since_step = 0
        for position, index in enumerate(order):
            ids, labels = encoded[index]
            logits = model(ids.unsqueeze(0))
            # next-token objective: logits at t predict token t+1
            loss = loss_fn(logits[0, :-1], labels[1:])
            (loss / accum).backward()
            running += float(loss.detach())
            since_step += 1
            if since_step == accum or position == len(order) - 1:
                optimizer.step()
                scheduler.step()
                optimizer.zero_grad()
                optimizer_steps += 1
                since_step = 0
        epoch_losses.append(running / len(order))

    adapter_dir = save_adapter(model, out_dir, adapter_cfg)
    log = {
        "adapter": adapter_cfg,
        "training": train_cfg,
        "optimizer_requested": str(train_cfg["optimizer"]),
        "optimizer_used": optimizer_used,
        "optimizer_steps": optimizer_steps,
        "epoch_losses": epoch_losses,
        "n_samples": len(samples),
        "seed": seed,
        "max_seq": max_seq,
    }
    (adapter_dir / "training_log.json").write_text(
        json.dumps(log, indent=2) + "\n", encoding="utf-8"
    )
    return FinetuneReport(
        adapter_dir=adapter_dir,
        epoch_losses=epoch_losses,
        optimizer_requested=str(train_cfg["optimizer"]),
        optimizer_used=optimizer_used,
        optimizer_steps=optimizer_steps,
        n_samples=len(samples),
        adapter_config=adapter_cfg,
    )
