import os

import pytest

from singular_green import Domain, KernelSpec, assemble, build_graded_grid

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session", autouse=True)
def _matrix_cache(tmp_path_factory):
    if not os.environ.get("SINGULAR_GREEN_CACHE"):
        os.environ["SINGULAR_GREEN_CACHE"] = str(tmp_path_factory.mktemp("green_cache"))
    yield


_matrices = {}


def green(family, s, gamma=None, M=512, g=8.0, N=1):
    key = (family, s, gamma, M, g, N)
    if key not in _matrices:
        spec = KernelSpec(family, s, gamma, N)
        _matrices[key] = assemble(spec, build_graded_grid(spec.domain, M, g))
    return _matrices[key]


@pytest.fixture(scope="session")
def rfl1024():
    return green("rfl_interval", 0.25, M=1024, g=8.0)


@pytest.fixture(scope="session")
def rfl512():
    return green("rfl_interval", 0.25, M=512, g=8.0)


@pytest.fixture(scope="session")
def rfl_small():
    return green("rfl_interval", 0.25, M=128, g=8.0)


@pytest.fixture(scope="session")
def synth1024():
    return green("synthetic", 0.4, 0.5, M=1024, g=4.0)


@pytest.fixture(scope="session")
def synth_small():
    return green("synthetic", 0.4, 0.5, M=256, g=4.0)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
