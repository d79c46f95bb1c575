import numpy as np
import pytest

from twowayrelay.channel import CapacitySet

_REPORT: list[str] = []


@pytest.fixture
def report():
    """Collects one summary line per acceptance criterion for the terminal summary."""
    return _REPORT.append


def pytest_terminal_summary(terminalreporter):
    if _REPORT:
        terminalreporter.section("acceptance criteria")
        for line in _REPORT:
            terminalreporter.write_line(line)


def random_caps(rng: np.random.Generator, n: int, lo: float = 0.1, hi: float = 10.0) -> list[CapacitySet]:
    """Capacity sets drawn log-uniformly in [lo, hi]."""
    draws = np.exp(rng.uniform(np.log(lo), np.log(hi), size=(n, 4)))
    return [CapacitySet(*row) for row in draws]
