import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from stickymfg import validate_params

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=15, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

BASE = dict(sigma=0.1, theta=1.0, rho=0.02, alpha=0.0, b_curv=20.0, psi=0.01, delta=0.01, horizon=10.0)


def make_params(**changes):
    d = dict(BASE)
    d.update(changes)
    return validate_params(d)


@pytest.fixture
def params():
    return make_params()


# ------------------------------------------------------------ acceptance report

_RESULTS = {}
N_CRITERIA = 11


class _Recorder:
    def __call__(self, number, passed, detail):
        prev = _RESULTS.get(number)
        ok = bool(passed) and (prev is None or prev[0])
        text = detail if prev is None else f"{prev[1]}; {detail}"
        _RESULTS[number] = (ok, text)
        return bool(passed)


@pytest.fixture(scope="session")
def acceptance():
    """Record one PASS/FAIL outcome per numbered criterion (parts are AND-ed)."""
    return _Recorder()


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in range(1, N_CRITERIA + 1):
        ok, text = _RESULTS.get(number, (False, "no result recorded (errored or deselected)"))
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {text}")
