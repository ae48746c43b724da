from __future__ import annotations

import numpy as np
import pytest

from rewdecomp.mdp import GridworldSpec, TabularMdp, build_gridworld
from rewdecomp.trainer import TrainerConfig, train

SEEDS = (0, 1, 2, 3)

# lines collected by the acceptance module, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def corner_mdp() -> TabularMdp:
    return build_gridworld(GridworldSpec())


@pytest.fixture
def cycle_mdp() -> TabularMdp:
    """Two states that swap deterministically under the only action."""
    transition = np.array([[[0.0, 1.0]], [[1.0, 0.0]]])
    return TabularMdp(transition, np.array([0.0, 1.0]), 0.5, np.array([1.0, 0.0]))


@pytest.fixture(scope="session")
def trained_runs(corner_mdp):
    """Exact-mode runs on the corner grid for n = 2, 3, 4 and the default seeds."""
    cache: dict[int, list] = {}

    def get(n: int):
        if n not in cache:
            cache[n] = [train(corner_mdp, TrainerConfig(n_factors=n), seed) for seed in SEEDS]
        return cache[n]

    return get


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
