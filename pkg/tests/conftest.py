import numpy as np
import pytest

from ordinal_dpd.links import LINK_NAMES
from ordinal_dpd.model import Dataset, Theta
from ordinal_dpd.simulate import responses

ALPHAS = (0.0, 0.1, 0.3, 0.5, 1.0)


def random_theta(rng, m, p, scale=1.0):
    gamma = np.sort(rng.normal(0.0, 1.5, m - 1))
    gamma += np.arange(m - 1) * 0.3
    return Theta(gamma, rng.normal(0.0, scale, p))


def random_instance(rng, link, m, p, n):
    """Random theta and a dataset simulated from it."""
    theta = random_theta(rng, m, p)
    X = rng.normal(size=(n, p))
    y = responses(X, theta, link, rng)
    return theta, Dataset(X, y, m)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=LINK_NAMES)
def link(request):
    return request.param


def pytest_terminal_summary(terminalreporter):
    results = getattr(__import__("sys").modules.get("test_acceptance"), "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(results):
        ok, detail = results[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
