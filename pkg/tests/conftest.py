import numpy as np
import pytest

from simrobust.gaussian import QuadratureRule
from simrobust.links import builtin_link, constants_report


@pytest.fixture(scope="session")
def gh_rule():
    return QuadratureRule.gauss_hermite(200)


@pytest.fixture(scope="session")
def adaptive_rule():
    return QuadratureRule.adaptive_truncated()


_REPORT_CACHE = {}


@pytest.fixture(scope="session")
def report_for():
    """Cached constants reports keyed by (link, sigma, k4)."""

    def get(name, sigma=1.0, k4=None):
        key = (name, sigma, k4)
        if key not in _REPORT_CACHE:
            _REPORT_CACHE[key] = constants_report(builtin_link(name), sigma=sigma, k4=k4)
        return _REPORT_CACHE[key]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
