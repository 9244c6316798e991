import numpy as np
import pytest
from sklearn.base import clone

from fdnoma.estimators import ExhaustiveSearchAllocator, ScaPowerAllocator, realizations_to_array, sample_design
from fdnoma.params import ChannelRealization, SystemParams

P5 = SystemParams(snr_db=-5.0)


def test_sample_design_is_reproducible():
    a = sample_design(P5, 8, 3)
    assert a.shape == (8, 4)
    assert np.array_equal(a, sample_design(P5, 8, 3))
    assert np.all(np.diff(a[:, 1:], axis=1) >= 0)


def test_realizations_to_array():
    X = realizations_to_array([ChannelRealization(1.0, (2.0, 3.0, 4.0))])
    np.testing.assert_array_equal(X, [[1.0, 2.0, 3.0, 4.0]])


def test_fit_transform_predict():
    X = np.vstack([sample_design(P5, 6, 1), [[0.0, 0.0, 0.0, 0.0]]])
    est = ScaPowerAllocator(P5).fit(X)
    assert est.alpha_.shape == (7, 3)
    assert est.feasible_.tolist()[-1] is False
    assert np.isnan(est.alpha_[-1]).all() and est.sum_rate_[-1] == 0.0
    assert est.n_iter_[-1] == -1 and est.traces_[-1] is None
    np.testing.assert_allclose(est.transform(X[:6]), est.alpha_[:6])
    np.testing.assert_allclose(est.predict(X[:6]), est.sum_rate_[:6])
    assert np.allclose(est.alpha_[:6].sum(axis=1) <= 1 + 1e-9, True)


def test_relay_failure_gives_zero_rate():
    # receivers are strong, the PT-ST hop is not
    X = np.array([[0.05, 2e4, 3e4, 4e4]])
    est = ScaPowerAllocator(P5).fit(X)
    assert est.feasible_[0] and not est.st_decoded_[0]
    assert est.sum_rate_[0] == 0.0


def test_input_validation():
    est = ScaPowerAllocator(P5)
    with pytest.raises(ValueError):
        est.fit(np.ones((2, 3)))
    with pytest.raises(ValueError):
        est.fit(np.array([[1.0, np.nan, 2.0, 3.0]]))
    with pytest.raises(Exception):
        ScaPowerAllocator(P5).predict(np.ones((1, 4)))


def test_clone_and_params():
    est = ScaPowerAllocator(P5, mode="hd", eps=1e-5)
    twin = clone(est)
    assert twin.get_params()["eps"] == 1e-5 and twin.mode == "hd"


def test_es_allocator_close_to_sca():
    X = sample_design(P5, 4, 2)
    sca = ScaPowerAllocator(P5).fit(X)
    es = ExhaustiveSearchAllocator(P5, grid_step=0.01).fit(X)
    mask = sca.feasible_ & es.feasible_
    assert np.all(sca.sum_rate_[mask] >= es.sum_rate_[mask] - 0.05)
