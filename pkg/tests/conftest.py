import numpy as np
import pytest

from scgi.optics import Grid, OpticalLayout


@pytest.fixture
def fig2_layout():
    return OpticalLayout(532e-9, 5.0, 5.0, 2.5e-3)


@pytest.fixture
def fig4_layout():
    return OpticalLayout(550e-9, 0.35, 0.35, 1.65e-3)


@pytest.fixture
def beta_grid():
    return Grid.centered(2e-3, 513)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance criteria summary ---------------------------------------------

_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or rep.when != "call":
        return
    number, title = marker.args
    detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
    prev = _ACCEPTANCE.get(number)
    passed = rep.passed and (prev is None or prev[0])
    _ACCEPTANCE[number] = (passed, title, detail if prev is None else f"{prev[2]}; {detail}")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        passed, title, detail = _ACCEPTANCE[number]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {number:>2} {status}  {title}  [{detail}]")
