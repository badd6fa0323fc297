import os
from pathlib import Path

import pytest

ROOT = Path(__file__).parent


@pytest.fixture(autouse=True, scope='session')
def _run_from_repo_root():
    """Fixture paths such as fixtures/blobs.csv are relative to the repository root."""
    previous = os.getcwd()
    os.chdir(ROOT)
    yield
    os.chdir(previous)
