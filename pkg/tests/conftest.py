import numpy as np
import pytest
from hypothesis import settings

from flexsign.core import Dataset, GestureWindow, LabeledSample, Quality, Vocabulary
from flexsign.synth import GenConfig, make_default_vocabulary, synthesize_dataset

# first calls into numba kernels pay the compile cost
settings.register_profile("flexsign", deadline=None)
settings.load_profile("flexsign")


@pytest.fixture(scope="session")
def default_vocab():
    return make_default_vocabulary()


@pytest.fixture(scope="session")
def small_dataset(default_vocab):
    vocab, templates = default_vocab
    return synthesize_dataset(vocab, templates, GenConfig(seed=3, samples_per_class=6))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_dataset(X, y, k=None, shape=None):
    """Wrap a feature matrix as a Dataset (values must already be in [0, 1])."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    k = k or int(y.max()) + 1
    vocab = Vocabulary(tuple(f"s{c}" for c in range(max(k, 2))))
    shape = shape or (X.shape[1], 1)
    samples = [LabeledSample(GestureWindow(x.reshape(shape)), int(lab), Quality.CLEAN)
               for x, lab in zip(X, y)]
    return Dataset(vocab, tuple(samples))


# acceptance lines collected by tests/test_acceptance.py, echoed after the run
ACCEPTANCE_LINES: list[str] = []


def record_acceptance(line: str) -> None:
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
