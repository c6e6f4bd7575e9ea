"""Scikit-learn estimator wrappers."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

import vbblocks as vb
from vbblocks import DynSrcModel, DynVarModel


@pytest.fixture(scope="module")
def sequence():
    return vb.synth_sequence(xdim=6, sdim=2, tdim=40, seed=0, motion="step").data


class TestEstimatorApi:
    def test_get_set_params_round_trip(self):
        est = DynVarModel(n_sources=3, sweeps=20, seed=5)
        params = est.get_params()
        assert params["n_sources"] == 3 and params["seed"] == 5
        est2 = DynVarModel(**params)
        assert est2.get_params() == params

    def test_clone_compatible(self):
        est = DynVarModel(n_sources=2, sweeps=10)
        cloned = clone(est)
        assert cloned.get_params() == est.get_params()

    def test_predict_before_fit_raises(self):
        with pytest.raises(NotFittedError):
            DynVarModel().predict()

    def test_fit_predict_score(self, sequence):
        est = DynVarModel(n_sources=2, sweeps=25, tol=0.0, seed=0)
        assert est.fit(sequence) is est
        assert est.n_features_in_ == 6
        means = est.predict()
        assert means.shape == (39, 6)
        means2, variances = est.predict_dist()
        assert np.array_equal(means, means2)
        assert (variances > 0).all()
        score = est.score(sequence)
        assert np.isfinite(score)
        perp = est.perplexities(sequence)
        assert perp.shape == (39,)
        np.testing.assert_allclose(score, -np.mean(np.log(perp)), rtol=1e-12)

    def test_trace_monotone_and_cost_attributes(self, sequence):
        est = DynSrcModel(n_sources=2, sweeps=15, tol=0.0, seed=1).fit(sequence)
        totals = [cb.total for cb in est.trace_]
        assert all(b <= a + 1e-9 * max(1.0, abs(a)) for a, b in zip(totals, totals[1:]))
        assert est.cost_nats_ == totals[-1]
        np.testing.assert_allclose(
            est.bits_per_sample_, est.cost_nats_ / (40 * np.log(2)), rtol=1e-12
        )

    def test_mask_validation(self, sequence):
        est = DynVarModel(n_sources=2, mask=np.ones((5, 2), dtype=bool))
        with pytest.raises(ValueError):
            est.fit(sequence)

    def test_patch_shape_mask(self, sequence):
        est = DynVarModel(n_sources=2, patch_shape=(2, 3), sweeps=5, tol=0.0)
        est.fit(sequence)
        assert est.handles_.a.mask.shape == (6, 2)

    def test_determinism(self, sequence):
        a = DynVarModel(n_sources=2, sweeps=10, tol=0.0, seed=7).fit(sequence)
        b = DynVarModel(n_sources=2, sweeps=10, tol=0.0, seed=7).fit(sequence)
        assert a.cost_nats_ == b.cost_nats_
        assert np.array_equal(a.predict(), b.predict())
