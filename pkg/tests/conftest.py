import time

import numpy as np
import pytest

from finslergreen.fieldexpr import parse
from finslergreen.model import ModelSpec

_T0 = time.perf_counter()
ACCEPTANCE_LINES: list[str] = []
SUITE_LIMIT_S = 600.0


def make_model_a() -> ModelSpec:
    two = parse("2", 2)
    return ModelSpec(2, 1.0, 0.2, parse("1", 2), {(1, 0): two, (0, 1): two}, "A")


def make_model_b() -> ModelSpec:
    w = parse("2*(1 + 0.1*cos(x1))", 2)
    return ModelSpec(2, 1.0, 0.2, parse("1 + 0.2*sin(x1 + x2)", 2), {(1, 0): w, (0, 1): w}, "B")


def make_adversarial() -> ModelSpec:
    w = parse("1 + 20*(1 - exp(-((x1 - 1)*(x1 - 1) + x2*x2)/0.2))", 2)
    return ModelSpec(2, 1.0, 0.2, parse("1", 2), {(1, 0): w, (0, 1): w}, "adversarial")


# closed forms for Model A
F_AXIS = float(np.arccosh(2.25))
F_DIAG = 2.0 * float(np.arccosh(1.625))
SPEED_AXIS = 0.8 * float(np.sinh(F_AXIS))  # |grad_p H| at the axis dual point
TAU_AXIS = 1.0 / SPEED_AXIS


@pytest.fixture(scope="session")
def model_a():
    return make_model_a()


@pytest.fixture(scope="session")
def model_b():
    return make_model_b()


@pytest.fixture(scope="session")
def adversarial():
    return make_adversarial()


@pytest.fixture(scope="session")
def geom_a(model_a):
    from finslergreen.asymptotics import geometry

    return geometry(model_a, [1.0, 0.0], [0.0, 0.0])


@pytest.fixture(scope="session")
def geom_b(model_b):
    from finslergreen.asymptotics import geometry

    return geometry(model_b, [1.0, 0.0], [0.0, 0.0])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
    elapsed = time.perf_counter() - _T0
    verdict = "PASS" if elapsed < SUITE_LIMIT_S else "FAIL"
    terminalreporter.write_line(f"suite runtime: {verdict} ({elapsed:.1f} s, limit {SUITE_LIMIT_S:.0f} s single-threaded)")
