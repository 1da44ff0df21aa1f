import sys
from pathlib import Path

import pytest

# Project root on path so `import config` and `from src import ...` resolve
sys.path.insert(0, str(Path(__file__).parent.parent))

import config
from src import experiment
from src.fbm import TimeGrid


@pytest.fixture(autouse=True)
def isolated_state(tmp_path, monkeypatch):
    """errors.log and runs.db go to a per-test directory."""
    monkeypatch.setattr(config, "ERRORS_LOG_PATH", tmp_path / "errors.log")
    monkeypatch.setattr(config, "RUNS_DATABASE_PATH", tmp_path / "runs.db")
    for var in ("FVSIM_CHUNK_SIZE", "FVSIM_SEED", "FVSIM_OUTPUT_DIR"):
        monkeypatch.delenv(var, raising=False)
    return tmp_path


@pytest.fixture
def grid():
    return TimeGrid(1.0, 128)


def small_config(**sections):
    """Preset-shaped config dict with a small grid; sections override whole tables."""
    raw = {
        "name": "small",
        "grid": {"T": 1.0, "n": 64},
        "noise": {"hurst": 0.5, "K": 3, "family": "power", "p": 2.0, "scale": 1.0},
        "operator": {"kernel": "power", "alpha": 1.0, "spectrum": "dirichlet"},
        "integrand": {"kind": "identity"},
        "monte_carlo": {"replicas": 200, "seed": 11, "route": "exact_gaussian"},
    }
    for name, table in sections.items():
        raw[name] = {**raw.get(name, {}), **table}
    return experiment.parse(raw)
