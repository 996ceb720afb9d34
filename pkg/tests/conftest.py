import numpy as np
import pytest

from swan.core import ModelConfig
from swan.selftest import random_params, uniform_params


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_params():
    return random_params(ModelConfig(V=2, d=2, H=3, Hc=2, L=2, E=2), seed=5)


@pytest.fixture
def uniform22():
    # zero output projection: every class has probability 1/3
    return uniform_params(2, 2)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
    missing = [n for n in range(1, 10) if n not in results]
    if missing:
        terminalreporter.write_line(f"not run: {missing}")
