from __future__ import annotations

import pytest

from wch.layer import build_layer
from wch.potential import Potential


@pytest.fixture(scope="session")
def quartic():
    return Potential.quartic()


@pytest.fixture(scope="session")
def cosine():
    return Potential.cosine()


@pytest.fixture(scope="session")
def layer(quartic):
    return build_layer(quartic)


@pytest.fixture(scope="session")
def cosine_layer(cosine):
    return build_layer(cosine)


@pytest.fixture(scope="session")
def correction(layer):
    from wch.correction import build_correction
    return build_correction(layer)


@pytest.fixture(scope="session")
def kernel_table():
    from wch.kernels import build_kernel_table
    return build_kernel_table(1)


@pytest.fixture(scope="session")
def reduction_ctx(quartic, layer, correction):
    from wch.ansatz import CutOff
    from wch.reduction import ReductionContext
    return ReductionContext(quartic, layer, correction, CutOff(0.5))


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def report_criterion(request):
    """Record an acceptance line for the terminal summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def record(res):
        line = res.line()
        print(line)
        lines.append(line)
    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
