import numpy as np
import pytest

from liefloquet import alpha_flow, kapitza, optical_lattice, paul_trap, recombine


def bessel_j0_series(x: float, terms: int = 60) -> float:
    """J0 from its power series sum (-x^2/4)^k / (k!)^2."""
    total, term = 0.0, 1.0
    for k in range(terms):
        if k:
            term *= -(x * x / 4.0) / (k * k)
        total += term
    return total


@pytest.fixture(scope="session")
def presets():
    return {"paul-trap": paul_trap(), "optical-lattice": optical_lattice(), "kapitza": kapitza()}


@pytest.fixture(scope="session")
def runs(presets):
    """alpha trajectory and recombination result per preset at default parameters."""
    out = {}
    for name, p in presets.items():
        traj = alpha_flow(p.algebra, p.drive)
        out[name] = (p, traj, recombine(traj))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# -- acceptance summary ------------------------------------------------------------
# tests in test_acceptance.py attach a "criterion" property; one line per criterion
# is printed at the end of the run.

_CRITERIA: list[tuple[str, str, str]] = []


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    props = dict(report.user_properties)
    if "criterion" in props:
        outcome = "PASS" if report.passed else "FAIL"
        _CRITERIA.append((props["criterion"], outcome, props.get("detail", "")))


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for name, outcome, detail in sorted(_CRITERIA):
            terminalreporter.write_line(f"{outcome} {name}: {detail}")
