import numpy as np
import pytest

from dream import kernels

BACKENDS = [kernels.numpy_impl] + ([kernels.numba_impl] if kernels.numba_impl else [])


@pytest.fixture(params=BACKENDS, ids=lambda b: b.__name__.rsplit("_", 1)[-1])
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_REPORT = []


def report_line(line):
    """Print an acceptance line now and repeat it in the terminal summary."""
    print(line)
    _REPORT.append(line)


def pytest_terminal_summary(terminalreporter):
    if _REPORT:
        terminalreporter.section("acceptance criteria")
        for line in _REPORT:
            terminalreporter.write_line(line)
