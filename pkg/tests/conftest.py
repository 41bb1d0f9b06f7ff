import numpy as np
import pytest
import torch

from longal.data import SynthParams, generate_synthetic, preprocess_dataset
from longal.data.split import split_patients
from longal.learner import LearnerConfig

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def tiny_dataset():
    """6 patients, T=3, 32x32x2 -> 36 pairs."""
    return generate_synthetic(SynthParams(n_patients=6, h=32, w=32, c=2, lesion_diameter_range=(3, 6), seed=3))


@pytest.fixture(scope="session")
def tiny_splits(tiny_dataset):
    return split_patients(tiny_dataset, (0.5, 0.25, 0.25), seed=0)


@pytest.fixture(scope="session")
def small_splits():
    """10 patients, 16x16x2, split 6/2/2: 36 training pairs."""
    d = generate_synthetic(SynthParams(n_patients=10, h=32, w=32, c=2, lesion_diameter_range=(3, 6), seed=5))
    return split_patients(preprocess_dataset(d, (16, 16)), (0.6, 0.2, 0.2), seed=0)


@pytest.fixture
def fast_learner():
    return LearnerConfig(base_channels=4, lr=1e-3, batch_size=8, max_epochs=3, patience=2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, collected by tests/test_acceptance.py
ACCEPTANCE_RESULTS: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[n])
