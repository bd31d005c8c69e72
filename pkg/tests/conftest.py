import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("dirng", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("dirng")

SQRT2 = math.sqrt(2.0)


def chsh_guess_formula(S: float) -> float:
    """Single-party guessing probability at CHSH value ``S``."""
    return 0.5 + 0.5 * math.sqrt(max(0.0, 2.0 - S * S / 4.0))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, printed after the run
CRITERIA_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA_LINES:
            terminalreporter.write_line(line)
