import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_state(rng, dim, lo=None):
    from rotor_tf.rotor_core import BasisWindow, TruncatedRotorState

    lo = -(dim // 2) if lo is None else lo
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return TruncatedRotorState.from_amplitudes(BasisWindow(lo, lo + dim - 1), v)


ACCEPTANCE_LINES = []


def record_criterion(number, passed, detail):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
