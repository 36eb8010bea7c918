import os

import pytest
from hypothesis import HealthCheck, settings

from hypjulia.certify import certify
from hypjulia.polynomial import parse_poly

settings.register_profile(
    "default",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def z2():
    p = parse_poly("z^2")
    return p, certify(p)


@pytest.fixture(scope="session")
def basilica():
    p = parse_poly("z^2-1")
    return p, certify(p)


# acceptance lines are collected here and printed at the end of the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in range(1, 10):
        ok, detail = ACCEPTANCE.get(k, (None, "not run"))
        tag = "PASS" if ok else ("FAIL" if ok is not None else "SKIP")
        terminalreporter.write_line(f"criterion {k}: {tag}  {detail}")
