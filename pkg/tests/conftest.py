import numpy as np
import pytest

from yppe.baseline import PiecewiseExponential, TimeGrid, build_grid_per_event
from yppe.data import SurvivalData, load_gastric
from yppe.inference import fit


@pytest.fixture(scope="session")
def gastric():
    return load_gastric()


@pytest.fixture(scope="session")
def gastric_fit(gastric):
    return fit(gastric, build_grid_per_event(gastric))


@pytest.fixture
def three_piece():
    """Cuts {1, 2}, rates {0.5, 0.25, 0.125}."""
    return PiecewiseExponential(TimeGrid((1.0, 2.0)), (0.5, 0.25, 0.125))


def random_dataset(rng, n=30, p=2, censor=0.3):
    time = rng.exponential(2.0, size=n) + 0.01
    status = (rng.random(n) > censor).astype(int)
    status[0] = 1
    Z = rng.normal(size=(n, p))
    return SurvivalData.from_arrays(time, status, Z)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    """Record one ``criterion N PASS|FAIL: detail`` line for the summary."""

    def record(criterion, ok, detail):
        line = f"criterion {criterion} {'PASS' if ok else 'FAIL'}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
