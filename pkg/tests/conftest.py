import numpy as np
import pytest

from oscbath.equilibrium import ThermalState
from oscbath.formfactor import FormFactor, ModelParams
from oscbath.scattering import build_ops
from oscbath.spectral import build_spectral_data


@pytest.fixture(scope="session")
def gaussian():
    return FormFactor.gaussian()


@pytest.fixture(scope="session")
def params01(gaussian):
    return ModelParams(gaussian, 1.0, 0.1)


@pytest.fixture(scope="session")
def spectral01(params01):
    return build_spectral_data(params01, n=2000)


@pytest.fixture(scope="session")
def ops01(spectral01):
    return build_ops(spectral01)


@pytest.fixture(scope="session")
def ops_free(gaussian):
    return build_ops(build_spectral_data(ModelParams(gaussian, 1.0, 0.0), n=2000))


@pytest.fixture(scope="session")
def state1():
    return ThermalState(1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(42)


ACCEPTANCE_LINES = {}


@pytest.fixture
def record_criterion():
    """Store one pass/fail line per acceptance criterion for the terminal summary."""

    def record(number, passed, detail):
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
