import numpy as np
import pytest

from magstep import geometry, model1d, moments, tunneling


@pytest.fixture(scope="session")
def dg():
    return model1d.de_gennes_constants()


@pytest.fixture(scope="session")
def c05():
    return moments.edge_constants(-0.5)


@pytest.fixture(scope="session")
def ctx05(c05):
    return moments.resolvent_context(-0.5, constants=c05)


@pytest.fixture(scope="session")
def ellipse21():
    return geometry.build_ellipse(2.0, 1.0)


@pytest.fixture(scope="session")
def ellipse84():
    return geometry.build_ellipse(8.0, 4.0)


@pytest.fixture(scope="session")
def asym_curve():
    return geometry.build_fourier_curve(1.0, {2: -0.1, 3: 0.02})


@pytest.fixture(scope="session")
def effpot21(c05, ellipse21):
    return tunneling.effective_potential(c05, ellipse21)


@pytest.fixture(scope="session")
def agmon21(effpot21):
    return tunneling.agmon(effpot21)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n].line())
