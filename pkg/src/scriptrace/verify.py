"""Distances between feature vectors and writer-verification metrics."""

import csv
from dataclasses import asdict, dataclass, field
import json
import math

import numpy as np

from .validation import check_vector_pair

MEASURES = (
    "minkowski1",
    "minkowski2",
    "minkowski3",
    "minkowski4",
    "minkowski5",
    "euclidean",
    "chi2",
    "bhattacharyya",
    "hausdorff",
)
SWEEP_STEP = 0.1


def chi_square(a, b):
    """Chi-square histogram distance ``sum (a-b)^2 / (a+b)``.

    Components where ``a + b == 0`` contribute nothing.
    """
    a, b = check_vector_pair(a, b)
    den = a + b
    num = (a - b) ** 2
    nz = den != 0
    return float(np.sum(num[nz] / den[nz]))


def minkowski(a, b, p=2):
    if not 1 <= p:
        raise ValueError("Minkowski order must be at least 1")
    a, b = check_vector_pair(a, b)
    return float(np.sum(np.abs(a - b) ** p) ** (1.0 / p))


def euclidean_dw(a, b):
    """L2 distance between two embeddings."""
    a, b = check_vector_pair(a, b)
    return float(np.linalg.norm(a - b))


def bhattacharyya(a, b):
    """``-ln sum sqrt(p q)`` after scaling both vectors to unit sum.

    Returns ``inf`` for vectors with disjoint support.
    """
    a, b = check_vector_pair(a, b)
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("Bhattacharyya distance needs non-negative vectors")
    sa, sb = a.sum(), b.sum()
    if sa == 0 or sb == 0:
        raise ValueError("Bhattacharyya distance is undefined for an all-zero vector")
    bc = float(np.sum(np.sqrt((a / sa) * (b / sb))))
    if bc <= 0:
        return math.inf
    return max(0.0, -math.log(min(bc, 1.0)))


def _directed_hausdorff(a, b):
    sb = np.sort(b)
    hi = np.clip(np.searchsorted(sb, a), 0, len(sb) - 1)
    lo = np.clip(hi - 1, 0, len(sb) - 1)
    return float(np.max(np.minimum(np.abs(a - sb[lo]), np.abs(a - sb[hi]))))


def hausdorff(a, b):
    """Symmetric Hausdorff distance between the value sets of two vectors."""
    a, b = check_vector_pair(a, b)
    if a.size == 0:
        return 0.0
    return max(_directed_hausdorff(a, b), _directed_hausdorff(b, a))


def distance(a, b, measure="chi2"):
    """Dispatch on a measure name from :data:`MEASURES`."""
    a = getattr(a, "values", a)
    b = getattr(b, "values", b)
    if measure == "chi2":
        return chi_square(a, b)
    if measure == "euclidean":
        return euclidean_dw(a, b)
    if measure.startswith("minkowski"):
        return minkowski(a, b, int(measure[len("minkowski"):] or 2))
    if measure == "bhattacharyya":
        return bhattacharyya(a, b)
    if measure == "hausdorff":
        return hausdorff(a, b)
    raise ValueError(f"unknown distance measure {measure!r}; use one of {MEASURES}")


def pairwise(A, B, measure="chi2"):
    """Distance matrix between the rows of ``A`` and ``B``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        check_vector_pair(A[0], B[0])
    if measure == "chi2":
        out = np.empty((len(A), len(B)))
        for i, a in enumerate(A):
            den = a + B
            num = (a - B) ** 2
            with np.errstate(divide="ignore", invalid="ignore"):
                out[i] = np.where(den != 0, num / np.where(den != 0, den, 1), 0).sum(axis=1)
        return out
    if measure == "euclidean" or measure == "minkowski2":
        d2 = (A ** 2).sum(1)[:, None] + (B ** 2).sum(1)[None] - 2 * A @ B.T
        return np.sqrt(np.maximum(d2, 0))
    return np.array([[distance(a, b, measure) for b in B] for a in A])


# ---------------------------------------------------------------------------
# FAR / FRR


@dataclass
class VerificationCurve:
    thresholds: np.ndarray
    far: np.ndarray
    frr: np.ndarray
    eer: float

    @property
    def accuracy_pct(self):
        return (1.0 - self.eer) * 100.0

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["threshold", "far", "frr"])
            for row in zip(self.thresholds, self.far, self.frr):
                w.writerow([repr(float(v)) for v in row])

    def summary(self):
        return {"eer": self.eer, "accuracy_pct": self.accuracy_pct, "n_thresholds": len(self.thresholds)}


def _as_sample(values, name):
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError(f"{name} distances are empty")
    return arr


def far_frr_curve(diff_distances, same_distances):
    """Empirical FAR and FRR over every observed distance.

    ``FAR(T)`` is the share of different-writer distances at most ``T`` and
    ``FRR(T)`` the share of same-writer distances above ``T``.  The equal
    error rate interpolates linearly between the two thresholds that
    bracket the crossing.
    """
    diff = np.sort(_as_sample(diff_distances, "different-writer"))
    same = np.sort(_as_sample(same_distances, "same-writer"))
    t = np.unique(np.concatenate([diff, same]))
    if t[0] > 0:
        t = np.concatenate([[0.0], t])
    far = np.searchsorted(diff, t, side="right") / diff.size
    frr = 1.0 - np.searchsorted(same, t, side="right") / same.size
    gap = far - frr
    i = int(np.argmax(gap >= 0))
    if i == 0:
        eer = (far[0] + frr[0]) / 2.0
    else:
        lam = -gap[i - 1] / (gap[i] - gap[i - 1])
        eer = far[i - 1] + lam * (far[i] - far[i - 1])
    return VerificationCurve(t, far, frr, float(eer))


# ---------------------------------------------------------------------------
# contrastive loss and threshold sweep


@dataclass(frozen=True)
class ContrastiveParams:
    margin: float
    alpha: float = 0.5
    beta: float = 0.5

    def __post_init__(self):
        if not self.margin > 0:
            raise ValueError("contrastive margin must be positive")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")


def contrastive_loss(dw, label, params):
    """``alpha (1-l) Dw^2 + beta l max(0, m - Dw)^2``; ``l = 1`` marks a
    different-writer pair."""
    if dw < 0:
        raise ValueError("distance must be non-negative")
    if label not in (0, 1):
        raise ValueError("label must be 0 or 1")
    return params.alpha * (1 - label) * dw ** 2 + params.beta * label * max(0.0, params.margin - dw) ** 2


def default_margin(pair_distances):
    """Mean squared pair distance; 0 for all-zero input (an invalid margin)."""
    d = np.asarray(pair_distances, dtype=float).ravel()
    if d.size == 0:
        raise ValueError("need at least one pair distance")
    return float(np.mean(d ** 2))


@dataclass
class SweepResult:
    best_d: float
    tpr: float
    tnr: float
    accuracy: float
    step: float = SWEEP_STEP
    grid: np.ndarray = field(default=None, repr=False)

    def summary(self):
        out = asdict(self)
        out.pop("grid")
        return out


def _pair_values(pairs, name):
    vals = [p[2] if isinstance(p, (tuple, list)) else p for p in pairs]
    return _as_sample(vals, name)


def sweep_grid(lo, hi, step=SWEEP_STEP):
    """``lo, lo + step, ...`` up to ``hi``, with ``hi`` itself always included."""
    n = int(math.floor((hi - lo) / step + 1e-9))
    grid = lo + step * np.arange(n + 1)
    if grid[-1] < hi:
        grid = np.append(grid, hi)
    return grid


def threshold_sweep(same_pairs, diff_pairs, step=SWEEP_STEP):
    """Best balanced accuracy ``(TPR + TNR) / 2`` over a threshold grid.

    Pairs may be ``(id_a, id_b, dw)`` triples or bare distances.  A pair is
    accepted as same-writer when ``dw <= d``.  Ties go to the smallest
    ``d``.
    """
    same = np.sort(_pair_values(same_pairs, "same-writer"))
    diff = np.sort(_pair_values(diff_pairs, "different-writer"))
    allv = np.concatenate([same, diff])
    grid = sweep_grid(allv.min(), allv.max(), step)
    tpr = np.searchsorted(same, grid, side="right") / same.size
    tnr = (diff.size - np.searchsorted(diff, grid, side="right")) / diff.size
    acc = (tpr + tnr) / 2.0
    k = int(np.argmax(acc))
    return SweepResult(float(grid[k]), float(tpr[k]), float(tnr[k]), float(acc[k]), step, grid)


def pair_distances(X, labels, measure="euclidean", ids=None):
    """Split all unordered pairs of rows into same- and different-writer
    ``(id_a, id_b, distance)`` triples."""
    X = np.asarray(X, dtype=float)
    labels = list(labels)
    ids = list(ids) if ids is not None else list(range(len(labels)))
    D = pairwise(X, X, measure)
    same, diff = [], []
    for i in range(len(labels)):
        for j in range(i + 1, len(labels)):
            rec = (ids[i], ids[j], float(D[i, j]))
            (same if labels[i] == labels[j] else diff).append(rec)
    return same, diff


def write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
