import math

import numpy as np
import pytest

from emberline.grid import SimConfig, uniform_grid

CLOSED_FORM_TOL = 1e-9


@pytest.fixture
def cfg():
    return SimConfig()


@pytest.fixture
def flat_grid():
    return uniform_grid((5, 5))


def binomial_band(p: float, n: int, sigmas: float = 4.0) -> tuple[float, float]:
    """Frequency interval p +/- sigmas * sqrt(p(1-p)/n)."""
    half = sigmas * math.sqrt(p * (1.0 - p) / n)
    return p - half, p + half


def random_state(rng: np.random.Generator, shape):
    from emberline.engine import ContinuousState
    w = rng.dirichlet(np.ones(3), size=shape)
    return ContinuousState(w[..., 0], w[..., 1], 1.0 - w[..., 0] - w[..., 1])


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
