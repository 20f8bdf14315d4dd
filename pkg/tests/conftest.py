import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from projlab.catalog import euclidean, quadric_metric
from projlab.geom import ChartDomain, ExprMetric

settings.register_profile(
    "projlab",
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("projlab")


def beltrami(n=2):
    return ExprMetric(quadric_metric(np.eye(n + 1)))


def klein(n=2):
    return ExprMetric(quadric_metric(np.diag([1.0] + [-1.0] * n), sign=-1.0))


def flat(n=2):
    return ExprMetric(euclidean(n))


def lorentzian_quadric():
    return ExprMetric(quadric_metric(np.array([[1.0, 0, 0], [0, 0, 1], [0, 1, 0]])))


@pytest.fixture
def box2():
    return ChartDomain.box(2, 0.5)


@pytest.fixture
def box3():
    return ChartDomain.box(3, 0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --------------------------------------------------------------------------
# acceptance summary: one line per criterion-marked test

_CRITERIA = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        msg = ""
        if rep.failed:
            msg = str(rep.longrepr.reprcrash.message).splitlines()[0] if hasattr(rep.longrepr, "reprcrash") else ""
        label = mark.args[1]
        if hasattr(item, "callspec"):
            label += f" [{item.callspec.id}]"
        _CRITERIA.append((mark.args[0], label, rep.outcome, rep.duration, msg))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num, label, outcome, dur, msg in sorted(_CRITERIA):
        line = f"criterion {num}: {'PASS' if outcome == 'passed' else 'FAIL'}  {label}  ({dur:.1f} s)"
        terminalreporter.write_line(line + (f"  -- {msg}" if msg else ""))
