import numpy as np
import pytest

from fdhetnet.config import SystemConfig


@pytest.fixture
def small_cfg():
    """A fast desk-scale configuration used by integration tests."""
    return SystemConfig(num_mbs_antennas=12, num_mues=4, num_scs=2, sc_tx_antennas=4,
                        sc_active_users=2, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = {}


@pytest.fixture
def report_criterion():
    """Record ``(number, name, passed, detail)`` for the acceptance summary."""
    def record(number: int, name: str, passed: bool, detail: str) -> bool:
        line = f"criterion {number:2d} {name}: {'PASS' if passed else 'FAIL'} ({detail})"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
