"""Score one candidate: train the fixed classifier with its transform.

The wire config fixes the training recipe (dataset, epochs, batch size,
SGD learning rate and momentum, classifier dropout); the worker's own
settings fix deployment knobs the protocol deliberately leaves out: split
sizes, device, seed, and the per-job time budget.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import torch
from torch import nn
from torch.utils.data import DataLoader

from .dataset import DataSpec, TransformedDataset, load_split
from .model import SmallConvNet
from .sandbox import (
    RUNTIME_ERROR,
    CandidateFailure,
    build_pipeline,
    run_with_timeout,
)

TRAIN_SAMPLES_ENV = "AUGFORGE_WORKER_TRAIN_SAMPLES"
TEST_SAMPLES_ENV = "AUGFORGE_WORKER_TEST_SAMPLES"


@dataclass(frozen=True)
class WorkerSettings:
    """Deployment knobs, orthogonal to the per-job wire config."""

    train_samples: int = 1024
    test_samples: int = 256
    seed: int = 0
    device: str = "cpu"
    data_root: str | None = None
    time_budget_s: float = 840.0

    @classmethod
    def from_env(cls, **overrides) -> "WorkerSettings":
        values = dict(overrides)
        if TRAIN_SAMPLES_ENV in os.environ and "train_samples" not in values:
            values["train_samples"] = int(os.environ[TRAIN_SAMPLES_ENV])
        if TEST_SAMPLES_ENV in os.environ and "test_samples" not in values:
            values["test_samples"] = int(os.environ[TEST_SAMPLES_ENV])
        return cls(**values)


def _config_value(config: dict, key: str, fallback, kind):
    value = config.get(key, fallback)
    try:
        return kind(value)
    except (TypeError, ValueError) as exc:
        raise CandidateFailure(RUNTIME_ERROR, f"bad config value {key}={value!r}") from exc


def _train_and_score(code: str, config: dict, settings: WorkerSettings) -> float:
    epochs = _config_value(config, "epochs", 1, int)
    batch = _config_value(config, "batch", 64, int)
    lr = _config_value(config, "lr", 0.01, float)
    momentum = _config_value(config, "momentum", 0.9, float)
    dropout = _config_value(config, "dropout", 0.2, float)
    dataset_name = str(config.get("dataset", "cifar-10"))
    if epochs < 1 or batch < 1:
        raise CandidateFailure(RUNTIME_ERROR, "epochs and batch must be positive")

    pipeline = build_pipeline(code)
    torch.manual_seed(settings.seed)

    spec = DataSpec(
        name=dataset_name,
        train_samples=settings.train_samples,
        test_samples=settings.test_samples,
        seed=settings.seed,
        data_root=settings.data_root,
    )
    device = torch.device(settings.device)
    train_data = TransformedDataset(load_split(spec, train=True), pipeline)
    test_data = TransformedDataset(load_split(spec, train=False), pipeline)

    loader_rng = torch.Generator().manual_seed(settings.seed)
    train_loader = DataLoader(train_data, batch_size=batch, shuffle=True, generator=loader_rng)
    test_loader = DataLoader(test_data, batch_size=batch, shuffle=False)

    model = SmallConvNet(dropout=dropout).to(device)
    optimizer = torch.optim.SGD(model.parameters(), lr=lr, momentum=momentum)
    loss_fn = nn.CrossEntropyLoss()

    model.train()
    for _ in range(epochs):
        for images, labels in train_loader:
            optimizer.zero_grad()
            loss = loss_fn(model(images.to(device)), labels.to(device))
            loss.backward()
            optimizer.step()

    model.eval()
    correct = 0
    total = 0
    with torch.no_grad():
        for images, labels in test_loader:
            predicted = model(images.to(device)).argmax(dim=1)
            correct += int((predicted.cpu() == labels).sum())
            total += len(labels)
    return correct / total


def evaluate_candidate(code: str, config: dict, settings: WorkerSettings | None = None) -> dict:
    """Run one evaluation job; always returns a wire-shaped result body.

    The returned dict carries either {"accuracy": float} or
    {"error_class": ..., "detail": ...}; transport-level concerns stay with
    the HTTP layer.
    """
    settings = settings or WorkerSettings.from_env()
    try:
        accuracy = run_with_timeout(
            lambda: _train_and_score(code, config, settings), settings.time_budget_s
        )
    except CandidateFailure as failure:
        return {"error_class": failure.error_class, "detail": failure.detail}
    except Exception as exc:
        return {"error_class": RUNTIME_ERROR, "detail": f"evaluation raised {exc!r}"}
    return {"accuracy": accuracy}
