import numpy as np
import pytest

_CRITERIA = []


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_unitary(rng, n, complex_=True):
    a = rng.standard_normal((n, n))
    if complex_:
        a = a + 1j * rng.standard_normal((n, n))
    q, r = np.linalg.qr(a)
    return q * (np.diag(r) / np.abs(np.diag(r)))


@pytest.fixture
def criterion():
    """Record one acceptance criterion result for the terminal summary."""

    def record(name, ok, detail=""):
        _CRITERIA.append((name, bool(ok), detail))
        assert ok, f"{name}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _CRITERIA:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
