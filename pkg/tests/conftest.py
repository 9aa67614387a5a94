import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from korteweg_fv import GridSpec

settings.register_profile("default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def grid_mixed():
    return GridSpec(1.0, 1.3, 12, 10)


VERDICTS = []


@pytest.fixture
def verdict():
    """Record and print one PASS/FAIL line per acceptance criterion, then assert it."""

    def _verdict(label, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {label}: {detail}"
        VERDICTS.append(line)
        print(line)
        assert ok, line

    return _verdict


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
