import numpy as np
import pytest

from gglab import kernels


@pytest.fixture(params=["numba", "numpy"])
def backend(request, monkeypatch):
    """Run a test once per kernel path."""
    if request.param == "numpy":
        monkeypatch.setattr(kernels, "HAS_NUMBA", False)
    elif not kernels.HAS_NUMBA:
        pytest.skip("numba disabled")
    return request.param


def random_spins(n, count, seed=0):
    return np.random.default_rng(seed).choice(np.array([-1, 1], dtype=np.int8), size=(count, n))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
