import numpy as np
import pytest

from sqfit.sq_core import SuperquadricParams


def random_sq(rng, a=(0.3, 3.0), eps=(0.1, 1.9), p=(-3.0, 3.0)):
    return SuperquadricParams(a=rng.uniform(*a, 3), eps=rng.uniform(*eps, 2),
                              p=rng.uniform(*p, 3), r=rng.uniform(-np.pi, np.pi, 3))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def unit_sphere():
    return SuperquadricParams()


# acceptance verdicts, printed once at the end of the session
VERDICTS = {}


def record_verdict(number: int, ok: bool, detail: str) -> None:
    VERDICTS[number] = (ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(VERDICTS):
        ok, detail = VERDICTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
