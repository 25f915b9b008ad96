"""Shared literals for the worker tests: one known-good candidate and the
canonical training config, shaped exactly as they travel on the wire."""

FIXED_TAIL_CANDIDATE = """import torchvision.transforms as transforms


def transform():
    return transforms.Compose([
        transforms.Resize((64, 64)),
        transforms.ToTensor(),
        transforms.Normalize(mean=(0.4914, 0.4822, 0.4465), std=(0.247, 0.2435, 0.2616)),
    ])
"""

CANONICAL_CONFIG = {
    "dataset": "cifar-10",
    "task": "img-classification",
    "epochs": 1,
    "batch": 64,
    "lr": 0.01,
    "momentum": 0.9,
    "dropout": 0.2,
}
