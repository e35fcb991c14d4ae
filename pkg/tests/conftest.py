import numpy as np
import pytest

from cmmsb import InteractionMatrix, SubgroupMap, rng_stream

acceptance_key = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[acceptance_key] = []


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(acceptance_key, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(lines):
        terminalreporter.write_line(line)


@pytest.fixture
def acceptance(request):
    """Record and print one pass/fail line for an acceptance criterion."""
    store = request.config.stash[acceptance_key]

    def report(number, title, passed, detail):
        line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
        print(line)
        store.append((number, line))
        return passed

    return report


@pytest.fixture
def rng():
    return rng_stream(20240611)


@pytest.fixture
def block_data():
    """10-node two-block directed network, every off-diagonal entry observed."""
    r = rng_stream(7)
    z = np.array([0] * 5 + [1] * 5)
    p = np.where(z[:, None] == z[None, :], 0.85, 0.1)
    e = (r.random((10, 10)) < p).astype(np.int8)
    return InteractionMatrix(e)


@pytest.fixture
def full_map():
    return SubgroupMap.full(10)
