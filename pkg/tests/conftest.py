import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("affnet", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("affnet")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# One line per acceptance criterion, printed in the terminal summary so the
# verdicts are visible even when pytest captures output.
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
