from pathlib import Path

import pytest

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(scope="session")
def golden_channels() -> Path:
    return GOLDEN / "qd_channels.csv"


@pytest.fixture(scope="session")
def golden_entropy() -> Path:
    return GOLDEN / "qd_entropy.csv"
