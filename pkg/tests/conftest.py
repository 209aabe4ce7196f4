import numpy as np
import pytest
from hypothesis import strategies as st

from fmosum.distrib import DistSeq, ProbGrid

_ACCEPTANCE_LINES = []


def random_quantiles(rng, n, M=21, scale=1.0):
    """``n`` random strictly increasing quantile rows on a uniform grid."""
    steps = rng.exponential(size=(n, M - 1)) * scale / M
    start = rng.normal(size=(n, 1)) * scale
    return np.hstack([start, start + np.cumsum(steps, axis=1)])


def random_seq(rng, n, M=21, scale=1.0) -> DistSeq:
    return DistSeq(ProbGrid.uniform(M), random_quantiles(rng, n, M, scale))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@st.composite
def quantile_rows(draw, n=3, M=17):
    """Hypothesis strategy for ``n`` non-decreasing rows on ``M`` levels.

    Values live on a 1e-3 lattice so squared differences never underflow.
    """
    rows = []
    for _ in range(n):
        start = draw(st.integers(min_value=-5000, max_value=5000))
        steps = draw(st.lists(st.integers(min_value=0, max_value=2000), min_size=M - 1, max_size=M - 1))
        rows.append(np.concatenate([[start], start + np.cumsum(steps)]) / 1000.0)
    return np.array(rows)


@pytest.fixture
def acceptance_report(request):
    """Record one PASS/FAIL line per acceptance criterion."""

    def report(label: str, ok: bool, detail: str) -> None:
        line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
