"""Shared small backgrounds for the unit tests."""
import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bachflow.model_spaces import make_model

settings.register_profile(
    "bachflow", deadline=None, max_examples=15,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("bachflow")

HYP_SLAB = dict(chart="hyperbolic", x_range=(0.1, 10.0), y_range=(-5.0, 5.0))
TORIC_BOX = dict(chart="toric", bounds=[(0.35, 1.22)] * 2)


def hyperbolic(shape=48, order=6, n=4, **kw):
    return make_model(-1, n, shape=shape, order=order, **{**HYP_SLAB, **kw})


def toric(shape=40, order=6, n=4):
    return make_model(1, n, shape=shape, order=order, active=(0, 1), **TORIC_BOX)


def torus(shape=16, order=8, n=4, active=(0, 1), **kw):
    return make_model(0, n, "torus", shape=shape, order=order, active=active, **kw)


@pytest.fixture(scope="session")
def hyp48():
    return hyperbolic()


@pytest.fixture(scope="session")
def hyp80():
    return hyperbolic(80, 8)


@pytest.fixture(scope="session")
def toric40():
    return toric()


@pytest.fixture(scope="session")
def torus16():
    return torus()


def rel(a, b) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
