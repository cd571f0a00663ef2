"""Shared fixtures and suite-wide configuration.

All dimensionless numbers follow the package convention gamma_coll = 1, so
times are in units of the inverse collective rate and omega is quoted
through omega_ratio = omega / omega_c.
"""

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dicke_sense import ModelParams
from dicke_sense.dicke import build_liouvillian
from dicke_sense.dynamics import stationary_state

# Property tests favour breadth over depth here: examples are cheap but the
# matrix sizes grow quickly with N, so cap the example count and disable the
# per-example deadline (eigensolves have high variance on a loaded box).
settings.register_profile(
    "suite",
    max_examples=25,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


def assert_valid_density(matrix, tol_herm=1e-12, tol_trace=1e-10, tol_psd=1e-10):
    """Trace-1, Hermitian, positive within tolerance."""
    matrix = np.asarray(matrix)
    assert np.max(np.abs(matrix - matrix.conj().T)) < tol_herm
    assert abs(np.trace(matrix).real - 1.0) < tol_trace
    eigs = np.linalg.eigvalsh((matrix + matrix.conj().T) / 2)
    assert eigs.min() > -tol_psd


@pytest.fixture(scope="session")
def params_small():
    """Oscillatory regime at a size where dense linear algebra is instant."""
    return ModelParams(n=6, omega=6.0)


@pytest.fixture(scope="session")
def lio_small(params_small):
    return build_liouvillian(params_small)


@pytest.fixture(scope="session")
def rho_ss_small(params_small):
    return stationary_state(params_small)


# ---------------------------------------------------------------------------
# Acceptance reporting: tests in test_acceptance.py append one line per
# criterion; they are echoed in the terminal summary so the pass/fail list
# is visible even with captured stdout.

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.ensure_newline()
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
