"""Writer identification: classifier backends and page-level aggregation.

All backends follow the scikit-learn estimator protocol.  ``classes_`` is
sorted, ``decision_function`` returns one finite score per writer (higher
means more likely) and ``predict`` picks the best-scoring writer.
"""

from dataclasses import dataclass, field
import json

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import DimensionMismatchError
from .validation import check_feature_matrix
from .verify import pairwise

MODEL_FORMAT = 1


def _check_training(X, y):
    X = check_feature_matrix(X)
    y = np.asarray(y)
    if len(y) != len(X):
        raise DimensionMismatchError(f"{len(X)} feature rows but {len(y)} labels")
    classes = np.unique(y)
    if len(classes) < 2:
        raise ValueError("need at least two writers to fit a classifier")
    return X, y, classes


class _WriterClassifier(ClassifierMixin, BaseEstimator):
    def _check_query(self, X):
        check_is_fitted(self, "classes_")
        return check_feature_matrix(X, self.n_features_in_)

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[np.argmax(scores, axis=1)]

    # -- persistence ---------------------------------------------------
    _fitted = ()

    def to_dict(self):
        check_is_fitted(self, "classes_")
        state = {k: getattr(self, k) for k in self._fitted}
        return {
            "format": MODEL_FORMAT,
            "backend": type(self).__name__,
            "params": self.get_params(),
            "classes": self.classes_.tolist(),
            "state": {k: np.asarray(v).tolist() for k, v in state.items()},
        }

    @classmethod
    def _from_dict(cls, blob):
        model = cls(**blob["params"])
        model.classes_ = np.asarray(blob["classes"])
        for k, v in blob["state"].items():
            setattr(model, k, np.asarray(v, dtype=float))
        model.n_features_in_ = int(blob["n_features_in"])
        return model


class NearestCentroid(_WriterClassifier):
    """Scores are negated distances to per-writer mean vectors.

    Parameters
    ----------
    metric : str
        Any measure accepted by :func:`scriptrace.verify.distance`.
    """

    _fitted = ("centroids_",)

    def __init__(self, metric="euclidean"):
        self.metric = metric

    def fit(self, X, y):
        X, y, classes = _check_training(X, y)
        self.classes_ = classes
        self.centroids_ = np.vstack([X[y == c].mean(axis=0) for c in classes])
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        X = self._check_query(X)
        return -pairwise(X, self.centroids_, self.metric)


class KNN(_WriterClassifier):
    """k-nearest-neighbour vote.

    Scores are vote counts.  ``predict`` breaks equal vote counts in favour
    of the writer whose voter is nearest (training order breaks distance
    ties).
    """

    _fitted = ("X_", "y_index_")

    def __init__(self, k=3, metric="chi2"):
        self.k = k
        self.metric = metric

    def fit(self, X, y):
        X, y, classes = _check_training(X, y)
        if self.k < 1:
            raise ValueError("k must be at least 1")
        self.classes_ = classes
        self.X_ = X
        self.y_index_ = np.searchsorted(classes, y)
        self.n_features_in_ = X.shape[1]
        return self

    def _neighbours(self, X):
        D = pairwise(X, self.X_, self.metric)
        k = min(self.k, len(self.X_))
        return np.argsort(D, axis=1, kind="stable")[:, :k]

    def decision_function(self, X):
        X = self._check_query(X)
        idx = self._neighbours(X)
        votes = np.zeros((len(X), len(self.classes_)))
        for row, nb in enumerate(idx):
            np.add.at(votes[row], self.y_index_[nb].astype(int), 1.0)
        return votes

    def predict(self, X):
        X = self._check_query(X)
        out = []
        for nb in self._neighbours(X):
            labels = self.y_index_[nb].astype(int)
            counts = np.bincount(labels, minlength=len(self.classes_))
            best = counts.max()
            winner = next(lab for lab in labels if counts[lab] == best)
            out.append(self.classes_[winner])
        return np.asarray(out)


class LinearOneVsAll(_WriterClassifier):
    """One-versus-all linear scorers trained by full-batch gradient descent
    on the L2-regularised squared hinge loss.

    Inputs are standardised with training statistics.  The step size is
    ``min(learning_rate, 1 / L)`` with ``L`` the Lipschitz constant of the
    gradient, which keeps the training loss non-increasing; the loss after
    every epoch is kept in ``loss_history_``.
    """

    _fitted = ("coef_", "intercept_", "mean_", "scale_", "loss_history_")

    def __init__(self, epochs=200, learning_rate=0.5, alpha=1e-4):
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.alpha = alpha

    def _loss(self, W, Z, Y):
        margin = np.maximum(0.0, 1.0 - Y * (Z @ W))
        return float((margin ** 2).sum() / len(Z) + 0.5 * self.alpha * (W[:-1] ** 2).sum())

    def fit(self, X, y):
        X, y, classes = _check_training(X, y)
        self.classes_ = classes
        self.n_features_in_ = X.shape[1]
        self.mean_ = X.mean(axis=0)
        scale = X.std(axis=0)
        self.scale_ = np.where(scale > 0, scale, 1.0)
        Z = np.hstack([(X - self.mean_) / self.scale_, np.ones((len(X), 1))])
        Y = np.where(y[:, None] == classes[None, :], 1.0, -1.0)
        n = len(Z)
        lip = 2.0 * np.linalg.norm(Z, 2) ** 2 / n + self.alpha
        step = min(self.learning_rate, 1.0 / lip)
        W = np.zeros((Z.shape[1], len(classes)))
        reg = np.ones((Z.shape[1], 1))
        reg[-1] = 0.0
        history = [self._loss(W, Z, Y)]
        for _ in range(self.epochs):
            margin = np.maximum(0.0, 1.0 - Y * (Z @ W))
            grad = -2.0 * Z.T @ (Y * margin) / n + self.alpha * reg * W
            W = W - step * grad
            history.append(self._loss(W, Z, Y))
        self.coef_ = W[:-1].T
        self.intercept_ = W[-1]
        self.loss_history_ = np.asarray(history)
        return self

    def decision_function(self, X):
        X = self._check_query(X)
        return ((X - self.mean_) / self.scale_) @ self.coef_.T + self.intercept_


BACKENDS = {
    "nearestCentroid": NearestCentroid,
    "knn": KNN,
    "linearOneVsAll": LinearOneVsAll,
}


def make_backend(name, **params):
    try:
        return BACKENDS[name](**params)
    except KeyError:
        raise ValueError(f"unknown backend {name!r}; use one of {sorted(BACKENDS)}") from None


def save_model(model, path):
    blob = model.to_dict()
    blob["n_features_in"] = int(model.n_features_in_)
    with open(path, "w") as fh:
        json.dump(blob, fh)


def load_model(path):
    with open(path) as fh:
        blob = json.load(fh)
    if blob.get("format") != MODEL_FORMAT:
        raise ValueError(f"unsupported model format {blob.get('format')!r}")
    cls = {c.__name__: c for c in BACKENDS.values()}[blob["backend"]]
    return cls._from_dict(blob)


# ---------------------------------------------------------------------------
# page-level strategies


@dataclass
class PageDecision:
    page_id: str
    final_writer: object
    score_vector: np.ndarray
    per_patch_labels: list = field(default_factory=list)


def majority(labels):
    """Most frequent label; equal counts go to the smallest label."""
    if len(labels) == 0:
        raise ValueError("need at least one label")
    values, counts = np.unique(np.asarray(labels), return_counts=True)
    return values[int(np.argmax(counts))]


def strategy_major(model, patches, page_id="page"):
    """Classify every patch and return the majority writer.

    The score vector holds each writer's vote share.
    """
    X = check_feature_matrix(patches)
    labels = model.predict(X)
    winner = majority(labels)
    idx = np.searchsorted(model.classes_, labels)
    scores = np.bincount(idx, minlength=len(model.classes_)) / len(labels)
    return PageDecision(page_id, winner, scores, list(labels))


def mean_vector(patches, n_p=None, mode="scalar", centers=None):
    """Page vector for the mean strategy.

    ``mode="scalar"`` averages each patch vector to one number and stacks
    the ``n_p`` numbers in patch-centre order.  ``mode="concat"`` (an
    alternative offered for comparison) averages the patch vectors
    component-wise instead.
    """
    X = check_feature_matrix(patches)
    if n_p is not None and len(X) != n_p:
        raise ValueError(f"expected exactly {n_p} patches, got {len(X)}")
    if centers is not None:
        order = sorted(range(len(X)), key=lambda i: (tuple(centers[i]), i))
        X = X[order]
    if mode == "scalar":
        return X.mean(axis=1)
    if mode == "concat":
        return X.mean(axis=0)
    raise ValueError(f"unknown mean mode {mode!r}")


def strategy_mean(model, patches, n_p, page_id="page", mode="scalar", centers=None):
    m = mean_vector(patches, n_p, mode, centers)
    scores = model.decision_function(m[None, :])[0]
    return PageDecision(page_id, model.classes_[int(np.argmax(scores))], scores)


def top_n_hits(score_vectors, truths, classes, n):
    """Per page: is the true writer among the ``n`` best scores?

    A writer tied with the ``n``-th best score counts as inside.
    """
    if n < 1:
        raise ValueError("N must be at least 1")
    classes = np.asarray(classes)
    hits = []
    for scores, truth in zip(score_vectors, truths):
        scores = np.asarray(scores, dtype=float)
        pos = np.flatnonzero(classes == truth)
        if pos.size == 0:
            hits.append(False)
            continue
        hits.append(int(np.sum(scores > scores[pos[0]])) < n)
    return np.asarray(hits, dtype=bool)


def top_n_accuracy(score_vectors, truths, classes, n):
    hits = top_n_hits(score_vectors, truths, classes, n)
    return float(hits.mean()) if hits.size else 0.0
