import numpy as np
import pytest

from hedgehog.charfn import (GraphProblem, PoleWarning, all_deltas, assemble_delta, check_regular, cycle_char,
                             high_energy_determinant, regularity_delta, solve_coefficient_system,
                             subset_labels, weyl_function)
from hedgehog.errors import NonRegularGraphError
from hedgehog.graph import spectra_inventory
from hedgehog.rootfinder import weyl_sequence


@pytest.fixture(scope="module")
def general_problem(general_truth):
    return general_truth.problem()


def test_delta_does_not_depend_on_k(r3_graph, rng):
    g, Q = r3_graph
    prob = GraphProblem(g, Q)
    lam = rng.uniform(-30, 200, 20) + 1j * rng.uniform(-10, 10, 20)
    for label in [(), (1,), (2, 3)]:
        vals = np.array([assemble_delta(prob, label, lam, k=k) for k in range(1, g.r + 1)])
        spread = np.max(np.abs(vals - vals[0]), axis=0) / np.abs(vals[0])
        assert spread.max() < 1e-10


def test_all_deltas_agree_with_single_assembly(general_problem):
    lam = np.array([1.5 + 0.2j, -4.0 + 0j, 60.0 + 3j])
    labels = spectra_inventory(2, 2, (1, 2))
    many = all_deltas(general_problem, labels, lam)
    for lab in labels:
        np.testing.assert_allclose(many[lab], assemble_delta(general_problem, lab, lam), rtol=1e-12)


def test_weyl_function_two_ways(general_problem):
    lam = np.array([-3.0 + 1j, 7.5 + 0.5j, -40.0 + 0j])
    for k in (1, 2):
        np.testing.assert_allclose(weyl_function(general_problem, k, lam),
                                   weyl_function(general_problem, k, lam, method="cramer"), rtol=1e-9)


@pytest.mark.parametrize("t", [20.0, 40.0, 80.0])
def test_weyl_function_high_energy(general_problem, t):
    rho = 1j * t
    m = weyl_function(general_problem, 1, np.array([rho**2]))[0]
    assert abs(1j * rho * m - 1) <= 10.0 / t


def test_weyl_function_pole_warning(general_problem):
    from hedgehog.rootfinder import first_zeros

    z = first_zeros(lambda lam: assemble_delta(general_problem, (), lam), 1, lo=-30, length=4.2).values[0]
    with pytest.warns(PoleWarning):
        weyl_function(general_problem, 1, np.array([z]), method="cramer")


def test_regularity_constant_is_the_high_energy_limit(general_graph):
    g0 = general_graph.with_h(np.zeros(4))
    d0 = regularity_delta(g0)
    vals = [high_energy_determinant(g0, 1j * t) for t in (10.0, 40.0, 160.0)]
    errs = [abs(v / 1j ** (g0.r + g0.N) - d0) for v in vals]
    assert max(errs[1:]) < 1e-9 * abs(d0)
    assert errs[0] < 1e-5 * abs(d0)


def test_check_regular(general_graph):
    assert abs(check_regular(general_graph)) > 0
    with pytest.raises(NonRegularGraphError):
        check_regular(general_graph, threshold=1e6)


def test_cycle_identities_at_zeros_of_d(general_problem):
    cp = general_problem.cycle
    z, M = weyl_sequence(cp, 10)
    v = cycle_char(cp, z + 0j)
    p = cp.params
    np.testing.assert_allclose(v.D, v.a + 1 + p.alpha * p.beta, rtol=1e-13)
    # phi S' = 1 where S = 0, so D^2 - Q^2 = 4 alpha beta
    np.testing.assert_allclose(v.D**2 - v.Q**2, 4 * p.alpha * p.beta, rtol=1e-7, atol=1e-7)
    assert np.all(M < 0)


def test_coefficient_system_with_exact_deltas(general_problem):
    g = general_problem.graph
    lam = np.concatenate([np.linspace(-20, 300, 30) + 0j, np.linspace(0, 300, 10) + 5j])
    flat = lam
    ends = general_problem.endpoints(flat)[: g.r]
    deltas = {lab: assemble_delta(general_problem, lab, flat) for lab in subset_labels(g)}
    a, d, flagged = solve_coefficient_system(g, ends, deltas, flat)
    ref = cycle_char(general_problem.cycle, flat)
    assert not flagged.any()
    np.testing.assert_allclose(a, ref.a, rtol=1e-7, atol=1e-9)
    np.testing.assert_allclose(d, ref.d, rtol=1e-7, atol=1e-9)
