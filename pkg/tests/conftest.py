import numpy as np
import pytest

from fastbss.fastmnmf import init_model
from fastbss.regufast import prior_means


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


class Instance:
    """Small random FastMNMF problem: observations, Q, model and a prior W."""

    def __init__(self, seed, n_freq=65, n_frames=40, n_mic=2, n_basis=4):
        rng = np.random.default_rng(seed)
        self.X = crandn(rng, n_freq, n_frames, n_mic)
        self.Q = np.eye(n_mic) + 0.3 * crandn(rng, n_freq, n_mic, n_mic)
        self.W = np.eye(n_mic) + 0.3 * crandn(rng, n_freq, n_mic, n_mic)
        self.Qhat = prior_means(self.W)
        self.model = init_model(n_freq, n_frames, n_mic, n_mic, n_basis, rng)


@pytest.fixture
def instance():
    return Instance(0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
