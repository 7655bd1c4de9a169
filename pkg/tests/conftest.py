import shutil
from pathlib import Path

import pytest

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

FIXTURE_FILES = (
    "pipeline.yaml",
    "sample_comments.ndjson",
    "replay_scores.ndjson",
    "other_top_terms.csv",
)


@pytest.fixture()
def fixture_dir(tmp_path) -> Path:
    """The bundled fixture copied somewhere writable."""
    for name in FIXTURE_FILES:
        shutil.copy(FIXTURES / name, tmp_path / name)
    return tmp_path
