"""Clustering backends, NMI, majority page grouping and speed-based style
labels."""

from collections import Counter
from dataclasses import dataclass, field
import math

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.optimize import linear_sum_assignment
from sklearn.cluster import MiniBatchKMeans

from .validation import check_feature_matrix

METHODS = ("kmeans", "minibatchKmeans", "fuzzyCMeans", "agglomerativeAvgLink")
UNASSIGNED = -1


@dataclass
class ClusterAssignment:
    item_ids: list
    labels: np.ndarray
    k: int
    history: list = field(default_factory=list)

    def to_rows(self):
        return [(i, int(lab)) for i, lab in zip(self.item_ids, self.labels)]


def _kmeans_pp(X, k, rng):
    centers = [X[int(rng.integers(len(X)))]]
    d2 = ((X - centers[0]) ** 2).sum(1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(len(X)))
        else:
            idx = int(rng.choice(len(X), p=d2 / total))
        centers.append(X[idx])
        d2 = np.minimum(d2, ((X - X[idx]) ** 2).sum(1))
    return np.array(centers)


def _assign(X, C):
    d2 = ((X[:, None, :] - C[None]) ** 2).sum(-1)
    lab = np.argmin(d2, axis=1)
    return lab, float(d2[np.arange(len(X)), lab].sum())


def kmeans(X, k, seed=0, max_iter=300, tol=1e-10):
    """Lloyd iterations from k-means++ seeds.

    Returns labels, centres and the inertia after every assignment step.
    """
    rng = np.random.default_rng(seed)
    C = _kmeans_pp(X, k, rng)
    labels, inertia = _assign(X, C)
    history = [inertia]
    for _ in range(max_iter):
        newC = C.copy()
        for j in range(k):
            members = X[labels == j]
            if len(members):
                newC[j] = members.mean(0)
        labels_new, inertia_new = _assign(X, newC)
        history.append(inertia_new)
        C = newC
        done = np.array_equal(labels_new, labels) or history[-2] - inertia_new <= tol
        labels = labels_new
        if done:
            break
    return labels, C, history


def fuzzy_cmeans(X, k, seed=0, m=2.0, max_iter=300, tol=1e-8):
    """Fuzzy c-means; returns hard labels (largest membership) and memberships."""
    rng = np.random.default_rng(seed)
    U = rng.random((len(X), k))
    U /= U.sum(1, keepdims=True)
    for _ in range(max_iter):
        W = U ** m
        C = (W.T @ X) / W.sum(0)[:, None]
        d = np.sqrt(((X[:, None, :] - C[None]) ** 2).sum(-1))
        d = np.maximum(d, 1e-12)
        inv = d ** (-2.0 / (m - 1))
        U_new = inv / inv.sum(1, keepdims=True)
        delta = np.abs(U_new - U).max()
        U = U_new
        if delta < tol:
            break
    return np.argmax(U, axis=1), U


def agglomerative(X, k):
    """Average-linkage clustering cut into ``k`` clusters."""
    if len(X) == 1:
        return np.zeros(1, dtype=int)
    Z = linkage(X, method="average", metric="euclidean")
    lab = fcluster(Z, t=k, criterion="maxclust") - 1
    # relabel by first appearance so ids do not depend on scipy's numbering
    _, first = np.unique(lab, return_index=True)
    order = np.argsort(first)
    remap = np.empty(order.size, dtype=int)
    remap[order] = np.arange(order.size)
    return remap[np.searchsorted(np.unique(lab), lab)]


def cluster_vectors(X, k, method="kmeans", seed=0, item_ids=None):
    """Partition the rows of ``X`` into ``k`` clusters."""
    X = check_feature_matrix(X)
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > len(X):
        raise ValueError(f"cannot form {k} clusters from {len(X)} items")
    ids = list(item_ids) if item_ids is not None else list(range(len(X)))
    history = []
    if method == "kmeans":
        labels, _, history = kmeans(X, k, seed)
    elif method == "minibatchKmeans":
        mb = MiniBatchKMeans(n_clusters=k, random_state=seed, n_init=3, batch_size=256)
        labels = mb.fit_predict(X)
    elif method == "fuzzyCMeans":
        labels, _ = fuzzy_cmeans(X, k, seed)
    elif method == "agglomerativeAvgLink":
        labels = agglomerative(X, k)
    else:
        raise ValueError(f"unknown clustering method {method!r}; use one of {METHODS}")
    return ClusterAssignment(ids, np.asarray(labels, dtype=int), k, history)


def _entropy(counts, n):
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def nmi(labels_a, labels_b):
    """Mutual information over the arithmetic mean of the two entropies.

    Two single-cluster labelings score 1; a single-cluster labeling against
    any other scores 0.
    """
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape:
        raise ValueError(f"label arrays differ in length: {a.size} != {b.size}")
    n = a.size
    if n == 0:
        raise ValueError("empty labelings")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1))
    np.add.at(table, (ia, ib), 1)
    ha = _entropy(table.sum(1), n)
    hb = _entropy(table.sum(0), n)
    if ha == 0 and hb == 0:
        return 1.0
    if ha == 0 or hb == 0:
        return 0.0
    pij = table / n
    outer = np.outer(table.sum(1), table.sum(0)) / n ** 2
    nz = pij > 0
    mi = float((pij[nz] * np.log(pij[nz] / outer[nz])).sum())
    return float(min(1.0, max(0.0, mi / ((ha + hb) / 2))))


def align_labels(labels, reference, k):
    """Permute cluster ids of ``labels`` to best match ``reference``."""
    labels = np.asarray(labels)
    reference = np.asarray(reference)
    cost = np.zeros((k, k))
    for a, b in zip(labels, reference):
        cost[a, b] -= 1
    rows, cols = linear_sum_assignment(cost)
    mapping = dict(zip(rows, cols))
    return np.array([mapping[v] for v in labels])


def majority_group_pages(per_plot_labels, pages=None, align=False, k=None):
    """Modal cluster of every page across clustering plots.

    Parameters
    ----------
    per_plot_labels : array-like of shape (n_plots, n_pages)
        Entry ``[p][j]`` is the cluster that plot ``p`` gave page ``j``.
    align : bool
        Relabel every plot onto the first one (Hungarian matching) before
        voting, for plots whose cluster ids are arbitrary.

    Returns
    -------
    ndarray
        Page labels; pages whose top two counts tie get ``-1``.
    """
    L = np.asarray(per_plot_labels, dtype=int)
    if L.ndim != 2:
        raise ValueError("per_plot_labels must be 2-D (plots x pages)")
    if pages is not None and len(pages) != L.shape[1]:
        raise ValueError("every page must appear in every plot")
    if align:
        k = k or int(L.max()) + 1
        L = np.vstack([L[0]] + [align_labels(row, L[0], k) for row in L[1:]])
    out = np.empty(L.shape[1], dtype=int)
    for j in range(L.shape[1]):
        common = Counter(L[:, j].tolist()).most_common()
        if len(common) > 1 and common[0][1] == common[1][1]:
            out[j] = UNASSIGNED
        else:
            out[j] = common[0][0]
    return out


# ---------------------------------------------------------------------------
# speed


ALPHA_S = 2.0


@dataclass(frozen=True)
class SpeedRecord:
    stroke_length: float
    elapsed: float

    def __post_init__(self):
        if not self.elapsed > 0:
            raise ValueError("elapsed time must be positive")

    @property
    def speed(self):
        return self.stroke_length / self.elapsed


@dataclass(frozen=True)
class SpeedThresholds:
    mu: float
    sigma: float
    alpha_s: float = ALPHA_S

    @property
    def t1(self):
        return math.ceil(self.mu + self.alpha_s * self.sigma)

    @property
    def t2(self):
        return math.ceil(self.mu - self.alpha_s * self.sigma)

    @classmethod
    def from_records(cls, medium_records, alpha_s=ALPHA_S):
        """Thresholds from one writer's medium-speed pages (population std)."""
        s = np.array([r.speed for r in medium_records], dtype=float)
        if s.size == 0:
            raise ValueError("need at least one medium-speed record")
        return cls(float(s.mean()), float(s.std()), alpha_s)


def speed_label(speed, thresholds):
    """``fast`` above T1, ``slow`` below T2, ``medium`` in between (inclusive)."""
    if speed > thresholds.t1:
        return "fast"
    if speed < thresholds.t2:
        return "slow"
    return "medium"


def speed_labels(records, thresholds):
    return [speed_label(r.speed, thresholds) for r in records]
