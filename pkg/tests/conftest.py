import numpy as np
import pytest

from aloft.data import SyntheticSpec, gen_synthetic


@pytest.fixture(scope="session")
def small_data():
    """Four domains, three classes, 20 images each: fast enough for training smoke tests."""
    return gen_synthetic(SyntheticSpec(per_class=20, seed=3))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """Record one acceptance line, then assert it."""
    def record(number, ok, detail):
        ACCEPTANCE[number] = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        assert ok, detail
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
