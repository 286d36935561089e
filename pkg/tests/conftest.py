import numpy as np
import pytest


def pytest_configure(config):
    config.acceptance_results = {}


def pytest_terminal_summary(terminalreporter):
    results = getattr(terminalreporter.config, "acceptance_results", {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(results):
        terminalreporter.write_line(results[key])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
