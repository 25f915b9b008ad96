import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from wire_fixtures import CANONICAL_CONFIG, FIXED_TAIL_CANDIDATE


@pytest.fixture
def fixed_tail_candidate():
    return FIXED_TAIL_CANDIDATE


@pytest.fixture
def canonical_config():
    return dict(CANONICAL_CONFIG)
