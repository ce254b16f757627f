import numpy as np
import pytest

from lanematch.lane import Lane, RowGrid


@pytest.fixture
def grid800():
    return RowGrid(n_rows=72, img_h=320, img_w=800)


@pytest.fixture
def culane_grid():
    return RowGrid()


def vertical(grid, x, score=1.0, rows=None):
    valid = np.zeros(grid.n_rows, dtype=bool)
    if rows is None:
        valid[:] = True
    else:
        valid[rows[0]:rows[1]] = True
    return Lane.from_rows(np.full(grid.n_rows, float(x)), valid, grid, score)


def slanted(grid, x0, dxdy, score=1.0):
    """Straight lane through (x0, bottom) moving ``dxdy`` px in x per px up."""
    ys = grid.ys
    xs = x0 + dxdy * (ys[0] - ys)
    valid = (xs >= 0) & (xs <= grid.img_w - 1)
    # keep the contiguous run from the bottom
    stop = grid.n_rows if valid.all() else int(np.argmin(valid))
    mask = np.zeros(grid.n_rows, dtype=bool)
    mask[:stop] = True
    return Lane.from_rows(xs, mask, grid, score)


def random_lane(rng, grid, score=None):
    """Random quadratic lane covering a random contiguous row run."""
    n = grid.n_rows
    first = int(rng.integers(0, n // 3))
    stop = int(rng.integers(first + 2, n + 1))
    r = np.arange(n)
    c = rng.uniform(0.1, 0.9) * grid.img_w
    b = rng.uniform(-3, 3)
    a = rng.uniform(-0.05, 0.05)
    xs = c + b * r + a * r**2
    valid = np.zeros(n, dtype=bool)
    valid[first:stop] = True
    s = float(rng.uniform(0.01, 0.99)) if score is None else score
    return Lane.from_rows(xs, valid, grid, s)




ACCEPTANCE_LINES = []


def record_criterion(number, title, ok, detail):
    line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
