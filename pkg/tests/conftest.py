import numpy as np
import pytest

from backaction.params import bundled_config, load_params
from backaction.steady_state import continuation_sweep

#: filled by test_acceptance; printed at the end of the session
ACCEPTANCE: dict = {}


@pytest.fixture(scope="session")
def fig2():
    return load_params(bundled_config("fig2"))


@pytest.fixture(scope="session")
def fig4():
    return load_params(bundled_config("fig4"))


@pytest.fixture(scope="session")
def fig5():
    return load_params(bundled_config("fig5"))


def ramp_solution(p, steps=16):
    """Mean field at p.p_in reached by ramping the power up from zero."""
    return continuation_sweep(p, np.linspace(0.0, p.p_in, steps))[-1]


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k[1:])):
        ok, detail, seconds = ACCEPTANCE[key]
        terminalreporter.write_line(
            f"{key}: {'PASS' if ok else 'FAIL'}  ({seconds:.1f} s)  {detail}")
