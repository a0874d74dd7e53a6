import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make util importable

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def runs_csv(fixtures_dir) -> Path:
    return fixtures_dir / "synthetic_runs.csv"
