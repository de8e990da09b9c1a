import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import trapezoid

from hedgehog.basis import Basis
from hedgehog.graph import grid


def test_unknown_kind_and_size():
    with pytest.raises(ValueError):
        Basis("legendre", 3)
    with pytest.raises(ValueError):
        Basis("cosine", 0)
    with pytest.raises(ValueError):
        Basis("cosine", 3).samples([1.0, 2.0], 1.0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4), st.floats(0.5, 2.0))
def test_piecewise_samples_keep_the_cell_integrals(theta, T):
    B = Basis("piecewise", 4)
    x = grid(T, 256)
    q = B.samples(theta, T, 256)
    # linear interpolation of box averages integrates like the step function
    assert trapezoid(q, x) == pytest.approx(sum(theta) * T / 4, abs=1e-12 * (1 + sum(map(abs, theta))))


def test_cosine_samples_match_exact_evaluation():
    B = Basis("cosine", 5)
    theta = np.array([0.3, -1.0, 0.5, 0.0, 0.25])
    x = grid(1.3, 128)
    np.testing.assert_allclose(B.samples(theta, 1.3, 128), B.evaluate(theta, x, 1.3), atol=1e-14)


@pytest.mark.parametrize("kind", ["cosine", "piecewise"])
def test_projection_inverts_sampling(kind):
    B = Basis(kind, 6)
    theta = np.linspace(-1, 1, 6) ** 3
    np.testing.assert_allclose(B.project(B.samples(theta, 0.9, 200), 0.9), theta, atol=1e-10)


def test_round_trip_dict():
    B = Basis("piecewise", 7)
    assert Basis.from_dict(B.to_dict()) == B
