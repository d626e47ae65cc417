import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make oracles importable

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def discover_runs(tmp_path_factory):
    """The bundled synthetic-FAQ pipeline, run twice for determinism checks."""
    from kgforge.pipeline import PipelineConfig, run_discover

    config = PipelineConfig.from_file(DATA / "discover_config.json")
    out1 = tmp_path_factory.mktemp("discover_run1")
    out2 = tmp_path_factory.mktemp("discover_run2")
    report1 = run_discover(config, out1)
    report2 = run_discover(config, out2)
    return config, out1, report1, out2, report2
