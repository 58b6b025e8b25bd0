import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from horbit.lie import load_preset

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def sl2():
    return load_preset("SL2R")


@pytest.fixture(scope="session")
def sl3():
    return load_preset("SL3R")


@pytest.fixture(params=["SL2R", "SL3R"], scope="session")
def group(request):
    return load_preset(request.param)
