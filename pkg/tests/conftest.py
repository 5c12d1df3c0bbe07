import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from agnostic_control import PriorSpec, SystemSpec, TimeGrid

settings.register_profile(
    "default", deadline=None, max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def ref_spec():
    """Scalar instance with every weight and noise level equal to one, T = 1."""
    return SystemSpec.scalar()


@pytest.fixture(scope="session")
def ref_grid(ref_spec):
    return TimeGrid(0.0, ref_spec.t_final, 2000)


@pytest.fixture(scope="session")
def unit_prior():
    return PriorSpec.isotropic(1.0)


def random_spd(rng: np.random.Generator, d: int, floor: float = 0.2) -> np.ndarray:
    m = rng.normal(size=(d, d))
    return m @ m.T / d + floor * np.eye(d)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report_criterion():
    """Record a one-line verdict, print it and fail the test if it did not pass."""

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
