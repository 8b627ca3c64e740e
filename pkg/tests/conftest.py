import numpy as np
import pytest

from netpost.graph import WeightedGraphState
from netpost.models import simulate_kinetic_ising, simulate_equilibrium_ising, simulate_gaussian
from netpost._rng import RandomStream


def random_graph(N, p, rng, scale=0.5, grid=None):
    """Random symmetric weighted graph; weights snapped to ``grid`` when given."""
    edges = []
    for i in range(N):
        for j in range(i + 1, N):
            if rng.random() < p:
                w = rng.normal(0.0, scale)
                if grid is not None:
                    g = int(round(w / grid)) or 1
                    w = g * grid
                edges.append((i, j, w))
    return WeightedGraphState.from_edges(N, edges)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_graph():
    return WeightedGraphState.from_edges(
        6, [(0, 1, 0.4), (1, 2, -0.3), (2, 3, 0.5), (3, 4, 0.2), (0, 5, -0.6)]
    )


@pytest.fixture
def datasets(small_graph):
    """One small dataset per model kind, simulated from ``small_graph``."""
    g = small_graph
    gauss = g.copy()
    gauss.node_params[:] = 0.8
    return {
        "kinetic-ising": simulate_kinetic_ising(g, 40, rng=RandomStream(1)),
        "equilibrium-ising": simulate_equilibrium_ising(g, 40, rng=RandomStream(2), burn_in=20),
        "zero-ising": simulate_kinetic_ising(g, 40, rng=RandomStream(3), zero_state=True),
        "gaussian": simulate_gaussian(gauss, 40, rng=RandomStream(4)),
    }


_CRITERIA = []


@pytest.fixture
def record_criterion():
    """Log one acceptance line; the terminal summary repeats all of them."""

    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail})"
        _CRITERIA.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_CRITERIA):
            terminalreporter.write_line(line)
