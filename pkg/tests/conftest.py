import functools

import numpy as np
import pytest

from rp2struct import surface as sf


@functools.lru_cache(maxsize=None)
def torus(n, tau=1j):
    return sf.build_torus(n, tau)


@functools.lru_cache(maxsize=None)
def genus2(r):
    return sf.build_genus2(r)


def bump(surface, radius=1.3):
    """Smooth bump in the hyperbolic distance from the octagon centre."""
    d = surface.distance(surface.zpos, 0 * surface.zpos)
    return np.clip(1 - (d / radius) ** 2, 0, None) ** 4


def order(errors):
    e = np.asarray(errors, dtype=float)
    return np.log2(e[:-1] / e[1:])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one PASS/FAIL line per acceptance criterion in the terminal summary
_CRITERIA = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" in report.nodeid and (
            report.when == "call" or report.outcome != "passed"):
        name = report.nodeid.split("::")[-1][len("test_criterion_"):]
        if report.outcome != "passed" or name not in _CRITERIA:
            _CRITERIA[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_CRITERIA):
        num, _, label = name.partition("_")
        mark = "PASS" if _CRITERIA[name] == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {int(num):2d} {label:28s} {mark}")
