import math
from pathlib import Path

import pytest

from lpbound.query_model import parse_query
from lpbound.stats_engine import Relation

DATA = Path(__file__).resolve().parent.parent / "data"

SKEWED_TUPLES = [(1, "a"), (1, "b"), (1, "c"), (2, "a"), (2, "b"), (3, "b"), (3, "c"), (4, "d")]


@pytest.fixture
def skewed():
    return Relation("R", ("x", "y"), SKEWED_TUPLES)


@pytest.fixture
def selfjoin():
    return parse_query("Q1(X,Y,Z) = R(X,Y), R(Z,Y)")


@pytest.fixture
def triangle():
    return parse_query("Q(X,Y,Z) = R(X,Y), S(Y,Z), T(Z,X)")


@pytest.fixture
def join2():
    return parse_query("Q(X,Y,Z) = R(X,Y), S(Y,Z)")


# --- acceptance summary ------------------------------------------------------

_ACCEPTANCE: list[tuple[str, str]] = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        label = getattr(report, "criterion", None) or name
        _ACCEPTANCE.append(("PASS" if report.passed else "FAIL", label))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    doc = getattr(item.function, "__doc__", None)
    if doc:
        rep.criterion = doc.strip().splitlines()[0]


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for status, label in _ACCEPTANCE:
        terminalreporter.write_line(f"{status}  {label}")


def close(a, b, tol=1e-9):
    return math.isclose(a, b, rel_tol=0, abs_tol=tol)
