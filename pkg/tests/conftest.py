from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from condweight.population import load_population

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def poststrat_pop():
    return load_population(FIXTURES / "poststrat_500.csv")


@pytest.fixture(scope="session")
def outlier_pop():
    return load_population(FIXTURES / "outlier_100.csv")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance criterion outcome: ``criterion(number, ok, detail)``."""
    results = request.config.stash[ACCEPTANCE]

    def record(number, ok, detail):
        results.append((number, bool(ok), detail))
        print(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'} {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(ACCEPTANCE, [])
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(results, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
