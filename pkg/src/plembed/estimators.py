"""scikit-learn style wrappers around the map transformations.

Each estimator takes a :class:`PLMap` (or a ``(complex, images)`` pair) as
``X``.  ``fit`` validates the input and stores what the transformation
learns from it; ``transform`` returns a new ``PLMap``.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .complex import SimplicialComplex
from .errors import PreconditionError
from .fold import apply_plan, plan_folds
from .genpos import DEFAULT_RANK_TOL, DEFAULT_RETRIES, perturb_to_embedding
from .pipeline import iterate_nash, split_embed_pipeline
from .plmap import PLMap, _same_domain, shortness_margin

__all__ = ["check_plmap", "EmbeddingPerturber", "GraphIsometrizer", "SplitEmbedder",
           "NashIterator"]


def check_plmap(X) -> PLMap:
    """Coerce ``X`` to a PLMap, accepting a ``(complex, images)`` pair."""
    if isinstance(X, PLMap):
        return X
    if isinstance(X, tuple) and len(X) == 2 and isinstance(X[0], SimplicialComplex):
        return PLMap(X[0], np.asarray(X[1], dtype=float))
    raise PreconditionError(f"expected a PLMap or (complex, images) pair, got {type(X).__name__}")


def _check_same(X: PLMap, fitted: PLMap):
    if not _same_domain(X.domain, fitted.domain) or not np.array_equal(X.images, fitted.images):
        raise PreconditionError("transform expects the map passed to fit")


class EmbeddingPerturber(TransformerMixin, BaseEstimator):
    """Perturb a strictly short map into a strictly short embedding."""

    def __init__(self, eps_schedule=(0.05,), base_vertex=None, seed=0,
                 rank_tol=DEFAULT_RANK_TOL, retries=DEFAULT_RETRIES, method="sequential"):
        self.eps_schedule = eps_schedule
        self.base_vertex = base_vertex
        self.seed = seed
        self.rank_tol = rank_tol
        self.retries = retries
        self.method = method

    def fit(self, X, y=None):
        f = check_plmap(X)
        self.margin_ = shortness_margin(f).margin
        if not self.margin_ > 0:
            raise PreconditionError(f"map is not strictly short (margin {self.margin_:.3g})")
        self.n_vertices_ = f.domain.n_vertices
        self.ambient_dim_ = f.ambient_dim
        return self

    def transform(self, X):
        check_is_fitted(self, "margin_")
        return perturb_to_embedding(check_plmap(X), self.eps_schedule, self.base_vertex,
                                    self.seed, rank_tol=self.rank_tol, retries=self.retries,
                                    method=self.method)


class GraphIsometrizer(TransformerMixin, BaseEstimator):
    """Fold a short graph map into an intrinsic isometry; ``fit`` computes the fold plan."""

    def __init__(self, eps_schedule=(0.05,), base_vertex=None, dyadic=True):
        self.eps_schedule = eps_schedule
        self.base_vertex = base_vertex
        self.dyadic = dyadic

    def fit(self, X, y=None):
        f = check_plmap(X)
        self.plan_ = plan_folds(f, self.eps_schedule, self.base_vertex, dyadic=self.dyadic)
        self.fitted_map_ = f
        return self

    def transform(self, X):
        check_is_fitted(self, "plan_")
        f = check_plmap(X)
        _check_same(f, self.fitted_map_)
        return apply_plan(f, self.plan_)[0]


class SplitEmbedder(TransformerMixin, BaseEstimator):
    """Split-coordinate isometric embedding of a graph map into R^N, N >= 3."""

    def __init__(self, eps_schedule=(0.05,), base_vertex=None, seed=0,
                 rank_tol=DEFAULT_RANK_TOL, retries=DEFAULT_RETRIES):
        self.eps_schedule = eps_schedule
        self.base_vertex = base_vertex
        self.seed = seed
        self.rank_tol = rank_tol
        self.retries = retries

    def fit(self, X, y=None):
        f = check_plmap(X)
        self.result_ = split_embed_pipeline(f, self.eps_schedule, self.base_vertex, self.seed,
                                            rank_tol=self.rank_tol, retries=self.retries,
                                            return_details=True)
        self.fitted_map_ = f
        return self

    def transform(self, X):
        check_is_fitted(self, "result_")
        _check_same(check_plmap(X), self.fitted_map_)
        return self.result_.map


class NashIterator(TransformerMixin, BaseEstimator):
    """Alternating isometrize/embed iteration; the report lands in ``report_``."""

    def __init__(self, eps_schedule=(0.05,), base_vertex=None, iterations=6, seed=0,
                 retries=DEFAULT_RETRIES):
        self.eps_schedule = eps_schedule
        self.base_vertex = base_vertex
        self.iterations = iterations
        self.seed = seed
        self.retries = retries

    def fit(self, X, y=None):
        f = check_plmap(X)
        self.map_, self.report_ = iterate_nash(f, self.eps_schedule, self.base_vertex,
                                               self.iterations, self.seed, retries=self.retries)
        self.fitted_map_ = f
        return self

    def transform(self, X):
        check_is_fitted(self, "report_")
        _check_same(check_plmap(X), self.fitted_map_)
        return self.map_
