from pathlib import Path
import sys
import os

import numpy as np
import pytest


ROOT = Path(__file__).resolve().parents[1]
root_str = str(ROOT)
if root_str not in sys.path:
    sys.path.insert(0, root_str)


os.environ.setdefault("TTGAN_LOG_LEVEL", "WARNING")
os.environ.setdefault("TTGAN_WORKERS", "1")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def isolated_output_dir(tmp_path, monkeypatch):
    # nothing a test runs should write into the repo's ./runs
    monkeypatch.setenv("TTGAN_OUTPUT_DIR", str(tmp_path / "runs"))
    return tmp_path / "runs"
