import numpy as np
import pytest

from mecbo.kernels import MixedPoint


def random_points(rng, n, M=2, N=2, T=30, contextual=False, distinct_t=False):
    ts = rng.choice(np.arange(1, T + 1), size=n, replace=False) if distinct_t else rng.integers(1, T + 1, n)
    pts = []
    for i in range(n):
        s = rng.normal(size=2 * M) if contextual else None
        pts.append(MixedPoint(rng.integers(0, N + 1, M), rng.uniform(0.05, 1.0, 2 * M), int(ts[i]), s))
    return sorted(pts, key=lambda z: z.t)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
