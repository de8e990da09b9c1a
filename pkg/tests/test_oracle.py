"""Analytic machinery against brute-force finite differences."""

import math

import numpy as np
import pytest

from hedgehog.charfn import GraphProblem, assemble_delta
from hedgehog.graph import CycleParams
from hedgehog.oracle import fd_cycle_weyl_data, fd_graph_eigenvalues
from hedgehog.propagators import CycleProblem
from hedgehog.rootfinder import first_zeros, weyl_sequence


def _delta_zeros(graph, Q, label, count):
    prob = GraphProblem(graph, Q)
    return first_zeros(lambda lam: assemble_delta(prob, label, lam), count, lo=-40, length=graph.total_length
                       ).expanded().real


@pytest.mark.parametrize("name", ["general_truth", "kirchhoff_truth"])
@pytest.mark.parametrize("label", [(), (1,), (1, 2)])
def test_graph_eigenvalues(request, name, label):
    truth = request.getfixturevalue(name)
    Q = truth.potential()
    fd = fd_graph_eigenvalues(truth.graph, Q, count=10, dirichlet_set=label)
    exact = _delta_zeros(truth.graph, Q, label, 10)
    np.testing.assert_allclose(fd, exact, rtol=1e-4, atol=1e-4)


def test_oracle_on_interval_like_cycle():
    # Dirichlet problem, q = 0, no jumps, length pi: z_n = n^2, M_n = -2 n^2 / pi
    cp = CycleProblem(np.array([math.pi / 2, math.pi / 2]), (np.zeros(3), np.zeros(3)),
                      CycleParams([1.0], [0.0], 0.0, 1.0, 1.0))
    z, M = fd_cycle_weyl_data(cp, count=8)
    n = np.arange(1, 9)
    np.testing.assert_allclose(z, n**2, rtol=1e-6)
    np.testing.assert_allclose(M, -2 * n**2 / math.pi, rtol=1e-5)


def test_cycle_weyl_data_with_jumps(general_truth):
    cp = general_truth.problem().cycle
    z_fd, M_fd = fd_cycle_weyl_data(cp, count=12)
    z, M = weyl_sequence(cp, 12)
    np.testing.assert_allclose(z_fd, z, rtol=1e-5, atol=1e-5)
    np.testing.assert_allclose(M_fd, M, rtol=1e-4)


def test_mesh_guards(general_truth):
    Q = general_truth.potential()
    with pytest.raises(ValueError, match="below the minimum"):
        fd_graph_eigenvalues(general_truth.graph, Q, mesh_density=16)
    with pytest.raises(ValueError, match="too coarse"):
        fd_graph_eigenvalues(general_truth.graph, Q, mesh_density=64, count=400)
