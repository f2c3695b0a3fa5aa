import numpy as np
import pytest

from wildband import SurvivalDataset, fit


def make_dataset(rng, n=20, p=1, truncation=False, ties=False, censor=0.3):
    """Random counting-process data; optional delayed entry and tied times."""
    X = rng.normal(size=(n, p))
    stop = rng.exponential(size=n) + 0.05
    if ties:
        stop = np.round(stop, 1) + 0.1
    start = rng.uniform(0, 0.5, size=n) * stop if truncation else np.zeros(n)
    status = (rng.uniform(size=n) > censor).astype(int)
    status[np.argmin(stop)] = 1
    return SurvivalDataset.from_arrays(stop, status, X, start=start)


@pytest.fixture
def three():
    """Three subjects, x = (1, 0, 1), events at 1, 2, 3."""
    return SurvivalDataset.from_arrays([1.0, 2.0, 3.0], [1, 1, 1], [[1.0], [0.0], [1.0]])


@pytest.fixture
def three_fit(three):
    return fit(three)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def sim100():
    """One dataset of size 100 from the simulation design, with its fit."""
    from wildband.simulation import DgpConfig, generate_dataset
    ds = generate_dataset(DgpConfig(n=100), np.random.default_rng(5))
    return ds, fit(ds)


# -- acceptance summary -------------------------------------------------------

ACCEPTANCE = {}


def record(criterion, ok, detail):
    """Store one pass/fail line for the end-of-run acceptance summary."""
    ACCEPTANCE[criterion] = f"{'PASS' if ok else 'FAIL'}  criterion {criterion}: {detail}"
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
