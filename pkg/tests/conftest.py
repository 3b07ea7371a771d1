import os

import numpy as np
import pytest

from selfenc.data import load_bundled


def pytest_collection_modifyitems(config, items):
    if os.environ.get("SELFENC_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="slow; set SELFENC_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def iris():
    return load_bundled("iris")


@pytest.fixture
def nprng():
    return np.random.default_rng(12345)


_CRITERIA: list[str] = []


@pytest.fixture
def report_criterion(request):
    """Record a one-line PASS/FAIL outcome, echoed now and again in the terminal summary."""

    def record(number, passed: bool, detail: str):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        _CRITERIA.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
