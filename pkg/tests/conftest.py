import numpy as np
import pytest

from behaviorkit import motiondata as md
from behaviorkit.training import TrainConfig, train_vae

# Filled in by test_acceptance.py; echoed after the run so every criterion
# gets its own visible pass/fail line.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def tiny_dataset():
    """Small but fully-formed dataset: 6 families, 8 sequences each."""
    return md.make_dataset(seed=11, count_per_family=8)


TINY_TRAIN = dict(epochs=2, lr=1e-3, decay_epochs=(), latent=8, hidden=16,
                  aux_hidden=16)


@pytest.fixture(scope="session")
def tiny_model(tiny_dataset):
    """A barely-trained small model; enough for plumbing-level tests."""
    model, state, log = train_vae(tiny_dataset, TrainConfig(seed=5, **TINY_TRAIN))
    return model


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
