import numpy as np
import pytest

from aatr.grid import FunctionalDataset, make_grid, standardize


def random_dataset(n, p, seed, smooth=True, noise=0.5):
    """Standardized random curves with a linear response."""
    rng = np.random.default_rng(seed)
    grid = make_grid(p, -1, 1)
    if smooth:
        t = grid.points
        k = np.arange(1, 8)
        basis = np.vstack([np.sin(np.pi * kk * (t + 1) / 2) for kk in k])
        x = rng.normal(size=(n, k.size)) @ basis + 0.1 * rng.normal(size=(n, p))
    else:
        x = rng.normal(size=(n, p))
    beta = np.sin(np.pi * grid.points)
    y = grid.dt * x @ beta + noise * rng.normal(size=n) + 0.3
    return standardize(FunctionalDataset(grid, x, y))


@pytest.fixture
def small_ds():
    return random_dataset(20, 50, 0)


# criterion number -> (passed, detail), filled by test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int("".join(c for c in k if c.isdigit())), k)):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
