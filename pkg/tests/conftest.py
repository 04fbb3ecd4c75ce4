import json
import warnings
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def oracles():
    return json.loads((DATA / "oracles.json").read_text())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _quiet_identifiability_warning():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="improper sigma")
        yield


# -- acceptance report: one line per criterion, printed after the run -------------------------

_ACCEPTANCE: dict = {}


@pytest.fixture(scope="session")
def acceptance_record():
    def record(number: int, title: str, passed: bool, detail: str):
        _ACCEPTANCE[number] = (title, passed, detail)
        print(f"criterion {number:2d} [{'PASS' if passed else 'FAIL'}] {title}: {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, passed, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d} [{'PASS' if passed else 'FAIL'}] {title}: {detail}")
