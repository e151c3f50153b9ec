import numpy as np
import pytest

from l2blab.model import TrainBatch, init_params
from l2blab.numcore import make_rng

_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for cid, name, ok, detail in sorted(lines, key=lambda r: r[0]):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] C{cid} {name}: {detail}")


class _Recorder:
    def __init__(self, sink):
        self._sink = sink

    def check(self, cid, name, ok, detail):
        self._sink.append((cid, name, bool(ok), detail))
        print(f"[{'PASS' if ok else 'FAIL'}] C{cid} {name}: {detail}")
        assert ok, f"C{cid} {name}: {detail}"


@pytest.fixture
def criterion(request):
    return _Recorder(request.config.stash[_ACCEPTANCE_KEY])


@pytest.fixture
def rng():
    return make_rng(1234)


def random_batch(rng, n, d, L, start_id=0):
    X = rng.standard_normal((n, d))
    y = rng.integers(0, L, n)
    return TrainBatch(X, y, np.arange(start_id, start_id + n))


@pytest.fixture
def small_net(rng):
    return init_params([2, 16, 4], rng)
