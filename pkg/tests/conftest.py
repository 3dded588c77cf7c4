from pathlib import Path

import numpy as np
import pytest

from nbaiot_ids.ingest import N_FEATURES, Dataset
from nbaiot_ids.synthetic import write_synthetic_nbaiot


@pytest.fixture(scope="session")
def synth_root(tmp_path_factory) -> Path:
    """Small synthetic tree in the N-BaIoT layout: 2 devices x 11 files x 40 rows."""
    return write_synthetic_nbaiot(tmp_path_factory.mktemp("nbaiot"), rows_per_file=40, seed=3)


def make_dataset(counts, n_features=N_FEATURES, seed=0, names=None) -> Dataset:
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(len(counts)), counts)
    x = rng.normal(size=(labels.size, n_features)) + labels[:, None]
    names = names or tuple(f"c{i}" for i in range(len(counts)))
    return Dataset(x, labels, names)


# Acceptance verdicts, printed as one line per criterion at the end of the run.
ACCEPTANCE: dict[str, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
