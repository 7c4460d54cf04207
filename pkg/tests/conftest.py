import functools

import pytest

from geopressure.registry import load_map


@functools.lru_cache(maxsize=None)
def _load(name):
    return load_map(name)


@pytest.fixture(scope="session")
def cheb3():
    return _load("cheb3")


@pytest.fixture(scope="session")
def logistic4():
    return _load("logistic4")


@pytest.fixture(scope="session")
def notwi():
    return _load("notwi")


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance criteria")


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])
