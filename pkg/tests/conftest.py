import numpy as np
import pytest

from holderwave import build_spectrum

ACCEPTANCE = {}


def record(number, label, passed, detail):
    ACCEPTANCE[number] = (label, bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        label, passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {number:>2}. {label}: {detail}")


@pytest.fixture
def sp8():
    return build_spectrum("wave1d", 8)


@pytest.fixture
def sp1():
    return build_spectrum("wave1d", 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
