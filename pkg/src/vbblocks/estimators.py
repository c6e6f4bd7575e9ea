"""Scikit-learn style estimators wrapping the two sequence models.

``fit(X)`` treats the rows of X as time steps, builds the corresponding
block model, and trains it to convergence; ``predict`` returns one-step
predictive means for frames 2..T and ``score`` the mean per-dimension
predictive log density against the sequence.  Hyperparameters follow the
scikit-learn convention (set in ``__init__``, unchanged by ``fit``), so
the estimators compose with ``clone``, ``get_params`` and pipelines.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from . import learning, models
from .graph import GraphError, ModelGraph


class _SequenceModel(BaseEstimator):
    _model_kind = ""

    def __init__(
        self,
        n_sources: int = 4,
        mask=None,
        patch_shape=None,
        radius=None,
        sweeps: int = 150,
        tol: float = 1e-7,
        pattern_every: int = 10,
        seed: int = 0,
    ):
        self.n_sources = n_sources
        self.mask = mask
        self.patch_shape = patch_shape
        self.radius = radius
        self.sweeps = sweeps
        self.tol = tol
        self.pattern_every = pattern_every
        self.seed = seed

    def _resolve_mask(self, xdim: int):
        if self.mask is not None:
            mask = np.asarray(self.mask, dtype=bool)
            if mask.shape != (xdim, self.n_sources):
                raise ValueError(
                    f"mask shape {mask.shape} != ({xdim}, {self.n_sources})"
                )
            return mask
        if self.patch_shape is not None:
            h, w = self.patch_shape
            if h * w != xdim:
                raise ValueError(f"patch_shape {self.patch_shape} does not tile {xdim} inputs")
            return models.make_circular_mask((h, w), self.n_sources, self.radius)
        return None

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64, ensure_min_samples=2)
        tdim, xdim = X.shape
        graph = ModelGraph(tdim)
        spec_cls = models.DynVarSpec if self._model_kind == "dynvar" else models.DynSrcSpec
        builder = models.build_dynvar if self._model_kind == "dynvar" else models.build_dynsrc
        handles = builder(graph, spec_cls(xdim, self.n_sources, tdim, self._resolve_mask(xdim)))
        models.observe_data(handles, X)
        models.init_from_data(handles, X)
        report = graph.validate()
        if not report.ok:
            raise GraphError(f"model graph does not validate:\n{report.summary()}")
        config = learning.TrainConfig(
            max_sweeps=self.sweeps,
            rel_tol=self.tol,
            pattern_search_every=self.pattern_every,
            seed=self.seed,
        )
        self.trace_ = learning.train(graph, config)
        self.graph_ = graph
        self.handles_ = handles
        self.n_features_in_ = xdim
        self.n_samples_ = tdim
        self.cost_nats_ = self.trace_[-1].total
        self.bits_per_sample_ = self.trace_[-1].bits_per_sample
        return self

    def predict(self, X=None):
        """One-step predictive means for frames 2..T of the fitted sequence."""
        check_is_fitted(self, "graph_")
        means, _ = models.predict_series(self.graph_, self.handles_)
        return means

    def predict_dist(self):
        """One-step predictive means and variances for frames 2..T."""
        check_is_fitted(self, "graph_")
        return models.predict_series(self.graph_, self.handles_)

    def perplexities(self, X) -> np.ndarray:
        """Per-frame predictive perplexity against the given sequence."""
        check_is_fitted(self, "graph_")
        X = check_array(X, dtype=np.float64)
        if X.shape != (self.n_samples_, self.n_features_in_):
            raise ValueError(f"expected shape {(self.n_samples_, self.n_features_in_)}, got {X.shape}")
        means, variances = models.predict_series(self.graph_, self.handles_)
        out = np.zeros(means.shape[0])
        for t in range(means.shape[0]):
            pred = models.PredictiveGaussian(means[t], variances[t])
            out[t] = models.predictive_perplexity(pred, X[t + 1])
        return out

    def score(self, X, y=None) -> float:
        """Mean per-dimension one-step predictive log density (higher is
        better); equals -log of the geometric-mean perplexity."""
        return float(-np.mean(np.log(self.perplexities(X))))


class DynVarModel(_SequenceModel):
    """Sequence model with linear dynamics on the innovation log
    precisions (variance sources)."""

    _model_kind = "dynvar"


class DynSrcModel(_SequenceModel):
    """Sequence model with linear dynamics directly on the sources and
    static innovation log precisions."""

    _model_kind = "dynsrc"
