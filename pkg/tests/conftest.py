from __future__ import annotations

import pytest

from pelab.domain import DomainSpec, generate


@pytest.fixture(scope="session")
def square33():
    return generate(DomainSpec("square", {}, 1 / 32))


@pytest.fixture(scope="session")
def slit33():
    return generate(DomainSpec("slit", {}, 1 / 32))


@pytest.fixture(scope="session")
def comb33():
    return generate(DomainSpec("comb", {"teeth": 4}, 1 / 32))


@pytest.fixture(scope="session")
def strip():
    """One row of 31 cells between two end nodes."""
    return generate(DomainSpec("custom", {"box": [0, 0, 1, 2 / 32]}, 1 / 32))


_ACCEPTANCE: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE.append


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
