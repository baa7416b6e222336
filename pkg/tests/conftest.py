import numpy as np
import pytest

from xrtumap.hypercube import HyperCube


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_cube(rng, shape=(4, 5, 3), transmittance=True):
    return HyperCube(rng.uniform(0.0, 1.0, size=shape), transmittance=transmittance)


def two_blobs(n_per=50, dims=10, gap=20.0, seed=0):
    r = np.random.default_rng(seed)
    a = r.normal(size=(n_per, dims))
    b = r.normal(size=(n_per, dims)) + gap
    return np.vstack([a, b]), np.repeat([0, 1], n_per)


def separation_ratio(Y, labels):
    """Distance between class centroids over the larger within-class std."""
    c0, c1 = Y[labels == 0].mean(axis=0), Y[labels == 1].mean(axis=0)
    spread = max(
        np.sqrt(((Y[labels == k] - Y[labels == k].mean(axis=0)) ** 2).sum(axis=1).mean())
        for k in (0, 1)
    )
    return np.linalg.norm(c0 - c1) / spread


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])
