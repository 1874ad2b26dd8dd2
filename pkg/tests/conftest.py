import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from crebound.pipeline import RunConfig, run
from crebound.problems import make_problem

settings.register_profile(
    "default", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

_acceptance: dict[int, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    marks = getattr(report, "acceptance", None)
    if marks is None:
        return
    number, title = marks
    _acceptance.setdefault(number, [title, True])
    if not report.passed:
        _acceptance[number][1] = False


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is not None:
        report.acceptance = tuple(mark.args)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance):
        title, ok = _acceptance[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {title}")


class RunCache:
    """Pipeline runs shared across the session, keyed by (problem, h, criterion, order)."""

    def __init__(self):
        self.problems = {}
        self.results = {}
        self.elapsed = {}

    def problem(self, name, h=None):
        key = (name, h)
        if key not in self.problems:
            self.problems[key] = make_problem(name, h)
        return self.problems[key]

    def get(self, name, h=None, criterion="eet", order=3):
        key = (name, h, criterion, order)
        if key not in self.results:
            t0 = time.perf_counter()
            self.results[key] = run(self.problem(name, h), RunConfig(criterion, order))
            self.elapsed[key] = time.perf_counter() - t0
        return self.results[key]


@pytest.fixture(scope="session")
def runs():
    return RunCache()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
