import numpy as np
import pytest

from ssr.model import MechanicalSystem


def one_dof(omega0=1.0, zeta=0.05, nl=None):
    """Unit-mass oscillator ``x'' + 2 zeta w0 x' + w0^2 x = f``."""
    return MechanicalSystem(np.eye(1), np.array([[2 * zeta * omega0]]),
                            np.array([[omega0 ** 2]]), nl)


def linear_amplitude(omega0, zeta, Omega, force=1.0):
    return force / np.hypot(omega0 ** 2 - Omega ** 2, 2 * zeta * omega0 * Omega)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE = {}


def record(number, ok, detail):
    """Store and print one acceptance line ``PASS/FAIL criterion N: detail``."""
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
