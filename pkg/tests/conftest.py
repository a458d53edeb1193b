import numpy as np
import pytest

from unict_depth._accel import HAVE_NUMBA, set_numba
from unict_depth.autodiff import Tensor


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def t64(a, grad=True):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=grad, dtype=np.float64)


def numeric_grad(f, x, eps=1e-5):
    """Central differences of scalar ``f()`` w.r.t. every entry of array ``x``."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f()
        flat[i] = orig - eps
        fm = f()
        flat[i] = orig
        gf[i] = (fp - fm) / (2 * eps)
    return g


def rel_err(a, b):
    return np.abs(a - b).max() / max(np.abs(a).max(), np.abs(b).max(), 1e-12)


@pytest.fixture(params=["numba", "numpy"])
def kernel_mode(request):
    if request.param == "numba" and not HAVE_NUMBA:
        pytest.skip("numba not installed")
    prev = set_numba(request.param == "numba")
    yield request.param
    set_numba(prev)


_VERDICTS = {}


@pytest.fixture
def verdict():
    """``verdict(n, ok, detail)`` records an acceptance outcome and fails the test when ``ok`` is false."""

    def record(n, ok, detail):
        _VERDICTS[n] = (bool(ok), detail)
        assert ok, f"criterion {n}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_VERDICTS):
        ok, detail = _VERDICTS[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
