import numpy as np
import pytest

from asg import SyntheticSpec, generate_synthetic

BLOB_SPEC = SyntheticSpec(n_clusters=8, V=64, D=8, spread=0.0, seed=11)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def blobs():
    """Zero-noise 8-cluster data: (E, labels, spec)."""
    E, labels = generate_synthetic(BLOB_SPEC)
    return E, labels, BLOB_SPEC


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
