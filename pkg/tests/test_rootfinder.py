import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from hedgehog.charfn import GraphProblem, assemble_delta
from hedgehog.graph import CycleParams, PotentialField
from hedgehog.propagators import CycleProblem, rho_of
from hedgehog.rootfinder import (Spectrum, char_from_spectrum, find_zeros, first_zeros, omega_signs,
                                 real_zeros, weyl_sequence)


def sine_char(lam, T=1.0):
    rho = rho_of(lam)
    return T * np.sinc(rho * T / np.pi)  # sin(rho T) / rho, entire in lam


def test_zeros_of_sine_characteristic():
    spec = find_zeros(sine_char, (-10.0, 200.0))
    np.testing.assert_allclose(spec.values.real, (math.pi * np.arange(1, 5)) ** 2, rtol=1e-12)
    assert np.all(spec.multiplicities == 1)


def test_multiple_and_complex_zeros():
    roots = [2.0, 2.0, 5.0, 3.0 + 0.5j, 3.0 - 0.5j]
    f = lambda lam: np.prod([lam - r for r in roots], axis=0) * np.exp(-0.01 * lam)  # noqa: E731
    spec = find_zeros(f, (-5.0, 20.0))
    assert len(spec) == 5
    i = int(np.argmin(np.abs(spec.values - 2.0)))
    assert spec.multiplicities[i] == 2
    np.testing.assert_allclose(np.sort_complex(spec.expanded()), np.sort_complex(np.array(roots)), atol=1e-6)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.5, 3.0), st.integers(3, 25))
def test_first_zeros_counts(T, count):
    spec = first_zeros(lambda lam: sine_char(lam, T), count, lo=-5.0, length=T)
    assert len(spec) == count
    np.testing.assert_allclose(spec.values.real, (math.pi * np.arange(1, count + 1) / T) ** 2, rtol=1e-10)


def test_real_zeros_agree_with_plane_search(general_truth):
    prob = general_truth.problem()
    f = lambda lam: assemble_delta(prob, (), lam)  # noqa: E731
    a = first_zeros(f, 15, lo=-30, length=4.2).values.real
    b = real_zeros(f, 15, lo=-30, length=4.2).values.real
    np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-10)


def test_spectrum_dict_round_trip():
    s = Spectrum(np.array([3.0, 1.0 + 0j, 2.0]), np.array([1, 2, 1]), (0.0, 5.0), 4)
    assert list(s.values.real) == [1.0, 2.0, 3.0]
    t = Spectrum.from_dict(s.to_dict())
    np.testing.assert_array_equal(t.expanded(), s.expanded())
    assert len(s.truncated(2)) == 2


def test_weyl_sequence_closed_form():
    cp = CycleProblem(np.array([math.pi / 2, math.pi / 2]), (np.zeros(3), np.zeros(3)),
                      CycleParams([1.0], [0.0], 0.0, 1.0, 1.0))
    z, M = weyl_sequence(cp, 20)
    n = np.arange(1, 21)
    np.testing.assert_allclose(z, n**2, rtol=1e-8)
    np.testing.assert_allclose(M, -2 * n**2 / math.pi, rtol=1e-8)
    assert set(np.unique(omega_signs(cp, z))) <= {-1, 0, 1}


def test_product_reconstruction_and_rereferencing(general_truth):
    prob = general_truth.problem()
    g = prob.graph
    f = lambda lam: assemble_delta(prob, (), lam)  # noqa: E731
    g0 = g.with_h(np.zeros(g.n_edges))
    ref = GraphProblem(g0, PotentialField.zero(g0.lengths, 4))
    ref_fn = lambda lam: assemble_delta(ref, (), lam)  # noqa: E731
    data = first_zeros(f, 60, lo=-30, length=g.total_length)
    ref_spec = first_zeros(ref_fn, 60, lo=-30, length=g.total_length)
    F = char_from_spectrum(data, ref_fn, ref_spec, length=g.total_length)
    lam = np.array([-20.0, -5.0, 0.3, 3.0 + 2j])
    err = np.abs(F(lam) / f(lam) - 1)
    assert err.max() < 1e-3
    # referencing to the truth itself leaves only rounding
    exact = F.rereferenced(f)
    assert np.max(np.abs(exact(lam) / f(lam) - 1)) < 1e-9
