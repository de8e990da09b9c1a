import numpy as np
import pytest

from hedgehog.basis import Basis
from hedgehog.charfn import weyl_function
from hedgehog.errors import InconsistentDataError
from hedgehog.inverse_edge import GraphModel, reconstruct_edge, sample_points, weyl_from_two_spectra
from hedgehog.rootfinder import Spectrum

BASES = (Basis("cosine", 6), Basis("cosine", 6), Basis("piecewise", 4), Basis("piecewise", 4))


def test_graph_model_layout(general_graph):
    m = GraphModel(general_graph, BASES)
    assert m.n_q == 20 and m.size == 24
    theta = np.arange(m.size, dtype=float)
    coefs, h = m.split(theta)
    assert [c.size for c in coefs] == [6, 6, 4, 4]
    np.testing.assert_array_equal(m.join(coefs, h), theta)
    assert m.edge_index(2) == slice(12, 16)
    with pytest.raises(ValueError):
        GraphModel(general_graph, BASES[:3])


@pytest.fixture(scope="module")
def weyl1(general_dataset):
    d = general_dataset
    return weyl_from_two_spectra(d.spectra[()], d.spectra[(1,)], d.geometry, 1, 60)


def test_weyl_function_from_two_spectra(weyl1, general_truth):
    lam = sample_points(weyl1, 8)
    assert lam.max() < np.min(weyl1.delta0.zeros.real)
    exact = weyl_function(general_truth.problem(), 1, lam + 0j)
    np.testing.assert_allclose(weyl1(lam + 0j), exact, rtol=1e-3)
    # the model tail removes the truncation error
    refined = weyl1.rereferenced(general_truth.problem())
    np.testing.assert_allclose(refined(lam + 0j), exact, rtol=1e-8)


def test_too_few_eigenvalues(general_dataset):
    d = general_dataset
    short = Spectrum(d.spectra[()].values[:10], d.spectra[()].multiplicities[:10])
    with pytest.raises(InconsistentDataError):
        weyl_from_two_spectra(short, d.spectra[(1,)], d.geometry, 1, 60)


def test_edge_index_must_be_boundary(weyl1, general_graph):
    weyl1_bad = type(weyl1)(3, weyl1.delta0, weyl1.deltak)
    with pytest.raises(ValueError):
        reconstruct_edge(weyl1_bad, general_graph)


def test_boundary_edge_round_trip(weyl1, general_dataset, general_truth):
    rec = reconstruct_edge(weyl1, general_dataset.geometry, basis=BASES, starts=2)
    np.testing.assert_allclose(rec.coefficients, general_truth.edges[0].coefficients, atol=1e-3)
    assert rec.h == pytest.approx(general_truth.H[0], abs=1e-4)
    assert rec.diagnostics["cost"] < 1e-8
    assert rec.to_dict()["edge"] == 1
