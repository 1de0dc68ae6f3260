import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from pepafluid import bundled_model, numeric_model  # noqa: E402
from pepafluid.fluid import build_fluid_system  # noqa: E402

BACKENDS = ["python"]
try:
    from pepafluid import _ckernels  # noqa: F401
    BACKENDS.insert(0, "cython")
except ImportError:
    pass


@pytest.fixture
def model1():
    return bundled_model("model1")


@pytest.fixture
def model2():
    return bundled_model("model2")


@pytest.fixture
def nonsync():
    return bundled_model("nonsync")


@pytest.fixture
def fs1(model1):
    return build_fluid_system(model1)


@pytest.fixture
def fs2(model2):
    return build_fluid_system(model2)


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def nm_of(m):
    return numeric_model(m)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance_log(request):
    """List collecting one summary line per acceptance criterion."""
    return request.config.stash.setdefault(_ACCEPTANCE, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
