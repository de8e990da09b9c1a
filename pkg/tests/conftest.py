import numpy as np
import pytest

from hedgehog.basis import Basis
from hedgehog.graph import GraphSpec, PotentialField, validate_graph
from hedgehog.pipeline import EdgePotential, GraphReconstruction

COSINE6 = Basis("cosine", 6)
PIECEWISE4 = Basis("piecewise", 4)

GENERAL_SPEC = GraphSpec([1, 1], [1.0, 0.8, 1.3, 1.1], [1.0, 1.0, 2.0, 0.5], [1.0, 1.0, 0.5, 2.0],
                         [0.3, -0.2, 0.4, 0.1], xi=[1, 2])
KIRCHHOFF_SPEC = GraphSpec([1, 1], [1.0, 0.8, 1.3, 1.1], [1.0] * 4, [1.0] * 4, [0.3, -0.2, 0.4, 0.1], xi=[1, 2])
EDGES = [
    EdgePotential(COSINE6, [0, 0, 1.0, 0, 0, 0]),
    EdgePotential(COSINE6, [0.5, -0.3, 0, 0.2, 0, 0]),
    EdgePotential(PIECEWISE4, [0.5, -1.0, 1.5, 0.2]),
    EdgePotential(PIECEWISE4, [-0.7, 0.9, 0.0, 1.2]),
]


@pytest.fixture(scope="session")
def general_graph():
    return validate_graph(GENERAL_SPEC)


@pytest.fixture(scope="session")
def kirchhoff_graph():
    return validate_graph(KIRCHHOFF_SPEC)


@pytest.fixture(scope="session")
def general_truth(general_graph):
    return GraphReconstruction(general_graph, list(EDGES))


@pytest.fixture(scope="session")
def kirchhoff_truth(kirchhoff_graph):
    return GraphReconstruction(kirchhoff_graph, list(EDGES))


@pytest.fixture(scope="session")
def r3_graph():
    """N = 2, r = 3, with non-trivial coefficients and smooth potentials."""
    g = validate_graph(GraphSpec([2, 1], [0.9, 1.1, 0.7, 1.2, 1.0], [1.0, 1.5, 0.8, 2.0, 0.7],
                                 [1.0, 0.5, 1.25, 0.5, 1.2], [0.1, -0.3, 0.2, 0.5, -0.1], xi=[2, 3]))
    Q = PotentialField.from_functions(
        g.lengths, [lambda x, a=a: a * np.cos(2 * x) + 0.3 * x for a in (0.5, -1.0, 0.8, 1.5, -0.2)]
    )
    return g, Q


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def general_dataset(general_truth):
    from hedgehog.pipeline import forward_generate

    return forward_generate(general_truth.graph, general_truth.potential())


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    return request.config.stash.setdefault(_ACCEPTANCE, [])


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
