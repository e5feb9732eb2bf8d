from __future__ import annotations

import numpy as np
import pytest

from gbhelm.beam import build_first_order_beam
from gbhelm.medium import Bump, MediumModel

P3 = np.diag([0.0, 1.0, 1.0])


@pytest.fixture(scope="session")
def const2():
    return MediumModel(kind="constant", R=1.0, dim=2)


@pytest.fixture(scope="session")
def const3():
    return MediumModel(kind="constant", R=1.0, dim=3)


@pytest.fixture(scope="session")
def bump2():
    return MediumModel(kind="gaussian_bump", bumps=(Bump(0.5, 0.25, (0.0, 0.0)),), R=1.0, dim=2)


@pytest.fixture(scope="session")
def bump3():
    return MediumModel(kind="gaussian_bump", bumps=(Bump(0.3, 0.3, (0.1, 0.0, 0.0)),), R=1.0, dim=3)


@pytest.fixture(scope="session")
def beam5(const3):
    """The closed-form beam: straight ray along e1 from 0 with M0 = iP."""
    return build_first_order_beam(const3, np.zeros(3), np.array([1.0, 0, 0]), 1j * P3, s_span=(-1.0, 1.0))


@pytest.fixture(scope="session")
def bump_beam2(bump2):
    from gbhelm.source import initial_hessian

    x0 = np.array([-0.6, 0.1])
    p0 = np.sqrt(bump2.n2(x0)) * np.array([1.0, 0.0])
    return build_first_order_beam(bump2, x0, p0, initial_hessian(bump2, x0, p0), eta=0.3)


_ACCEPTANCE = {}


@pytest.fixture
def acceptance(capsys):
    """Recorder for acceptance lines: acceptance(number, passed, detail)."""

    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE[number] = line
        with capsys.disabled():
            print("\n" + line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
