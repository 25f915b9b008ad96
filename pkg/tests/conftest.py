import pytest

from augforge.repository import Repository, Source, new_record

VALID_CODE = """import torchvision.transforms as transforms


def transform():
    return transforms.Compose([
        transforms.RandomHorizontalFlip(p=0.5),
        transforms.Resize((64, 64)),
        transforms.ToTensor(),
        transforms.Normalize(mean=(0.4914, 0.4822, 0.4465), std=(0.247, 0.2435, 0.2616)),
    ])
"""


@pytest.fixture
def valid_code():
    return VALID_CODE


@pytest.fixture
def memory_repo():
    return Repository()


def make_brute_record(code: str, accuracy: float | None = None, arity: int = 1, **kwargs):
    return new_record(code, Source(kind="brute", arity=arity), accuracy=accuracy, **kwargs)


def make_llm_record(code: str, accuracy: float | None = None, epoch: int = 0, **kwargs):
    return new_record(
        code,
        Source(kind="llm", epoch_index=epoch, prompt_mode="direct"),
        accuracy=accuracy,
        **kwargs,
    )


def numbered_code(i: int) -> str:
    """Distinct valid candidate code per index (rotation degrees vary)."""
    return (
        "import torchvision.transforms as transforms\n"
        "\n"
        "\n"
        "def transform():\n"
        "    return transforms.Compose([\n"
        f"        transforms.RandomRotation({i % 360}.{i}),\n"
        "        transforms.Resize((64, 64)),\n"
        "        transforms.ToTensor(),\n"
        "        transforms.Normalize(mean=(0.4914, 0.4822, 0.4465), "
        "std=(0.247, 0.2435, 0.2616)),\n"
        "    ])\n"
    )
