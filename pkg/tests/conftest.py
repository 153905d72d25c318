import numpy as np
import pytest

from mixnum.config import make_mixed_config, reference_config

SMALL_CONFIGS = [
    (0, 1, 64, 8, 20, 10),
    (0, 1, 64, 0, 32, 16),
    (0, 2, 64, 8, 16, 4),
    (1, 2, 64, 4, 32, 16),
    (0, 2, 256, 20, 64, 16),
    (0, 1, 32, 6, 5, 3),
]


@pytest.fixture(scope="session")
def cfg():
    return reference_config()


@pytest.fixture(params=SMALL_CONFIGS, ids=lambda p: "mu{}-{}_N{}_cp{}_P{}_K{}".format(*p))
def small_cfg(request):
    return make_mixed_config(*request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_complex(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


# (criterion, passed, detail) lines filled in by test_acceptance.py
ACCEPTANCE: list = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name, passed, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
