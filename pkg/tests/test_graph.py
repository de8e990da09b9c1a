import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hedgehog.errors import GraphValidationError
from hedgehog.graph import (CycleParams, GraphSpec, PotentialField, grid, label_name, parse_label,
                            reduced_cycle_params, spectra_inventory, unwind_h, validate_graph)


def test_incidence_of_general_graph(general_graph):
    g = general_graph
    assert (g.N, g.r, g.n_edges) == (2, 2, 4)
    assert [v.boundary_in for v in g.vertices] == [(0,), (1,)]
    # cycle edges r+1..r+N; vertex k is entered by cycle edge r+k-1 (cyclically) and left by r+k
    assert [(v.cycle_in, v.cycle_out) for v in g.vertices] == [(3, 2), (2, 3)]
    assert g.cycle_length == pytest.approx(2.4)
    assert g.block_of(2) == 2


@pytest.mark.parametrize(
    "change, path",
    [
        (dict(alpha=[0.0, 1, 1, 1]), "alpha[0]"),
        (dict(beta=[1, 1, 0.0, 1]), "beta[2]"),
        (dict(beta=[1, -1, 1, 1]), "beta[1]"),
        (dict(edge_lengths=[1, -0.5, 1, 1]), "edge_lengths[1]"),
        (dict(xi=[2, 2]), "xi[0]"),
        (dict(block_sizes=[0, 2]), "block_sizes[0]"),
        (dict(block_sizes=[4]), "block_sizes"),
        (dict(h=[0.0, 0.0]), "h"),
    ],
)
def test_validation_names_the_field(change, path):
    base = dict(block_sizes=[1, 1], edge_lengths=[1, 1, 1, 1], alpha=[1] * 4, beta=[1] * 4, h=None, xi=None)
    base.update(change)
    with pytest.raises(GraphValidationError) as err:
        validate_graph(GraphSpec(**base))
    assert err.value.path == path


def test_default_xi_is_first_edge_of_each_block():
    g = validate_graph(GraphSpec([2, 3], [1.0] * 7, [1.0] * 7, [1.0] * 7))
    assert g.xi == (1, 3)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(1, 3), min_size=2, max_size=5))
def test_inventory_size(sizes):
    N, r = len(sizes), sum(sizes)
    bounds = np.cumsum([0] + sizes)
    xi = [int(bounds[k]) + 1 for k in range(N)]
    labels = spectra_inventory(N, r, xi)
    assert len(labels) == 2**N + r - N
    assert len(set(labels)) == len(labels)


@given(st.lists(st.integers(1, 40), max_size=6, unique=True))
def test_label_names_round_trip(items):
    label = tuple(sorted(items))
    assert parse_label(label_name(label)) == label


def test_reduced_parameters_and_unwinding(general_graph):
    p = reduced_cycle_params(general_graph)
    a, b, h = general_graph.alpha[2:], general_graph.beta[2:], general_graph.h[2:]
    assert p.gamma[0] == pytest.approx(math.sqrt(a[0] / b[0]))
    assert p.eta[0] == pytest.approx(p.gamma[0] * h[1])
    assert p.alpha * p.beta > 0
    np.testing.assert_allclose(unwind_h(p), h, rtol=1e-15)


def test_cycle_params_reject_bad_jumps():
    with pytest.raises(GraphValidationError):
        CycleParams([-1.0], [0.0], 0.0, 1.0, 1.0)
    with pytest.raises(GraphValidationError):
        CycleParams([1.0], [0.0], 0.0, 1.0, -1.0)


def test_potential_field_checks_and_interpolates():
    Q = PotentialField.from_functions([1.0, 2.0], [np.sin, np.cos], density=64)
    assert Q(0, 0.5) == pytest.approx(math.sin(0.5), abs=1e-4)
    assert Q.samples[1].size == grid(2.0, 64).size
    with pytest.raises(GraphValidationError) as err:
        PotentialField([1.0], (np.array([0.0, np.nan]),))
    assert err.value.path == "potential[0][1]"
    with pytest.raises(GraphValidationError):
        PotentialField([1.0, 1.0], (np.zeros(3),))
