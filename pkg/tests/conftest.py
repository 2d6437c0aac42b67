import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_density(rng, dim, rank=None):
    rank = rank or dim
    x = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = x @ x.conj().T
    return rho / np.trace(rho).real


ACCEPTANCE_RESULTS: dict[int, tuple[str, str, str]] = {}


class _Criterion:
    def __init__(self, number, title):
        self.number, self.title, self.detail = number, title, ""

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        status = "PASS" if exc_type is None else "FAIL"
        detail = self.detail if exc is None else f"{exc_type.__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
        ACCEPTANCE_RESULTS[self.number] = (status, self.title, detail)
        line = f"[criterion {self.number}] {status}: {self.title}" + (f" ({detail})" if detail else "")
        print(line)
        return False


@pytest.fixture
def criterion():
    return _Criterion


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        status, title, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"[criterion {number}] {status}: {title}" + (f" ({detail})" if detail else ""))
