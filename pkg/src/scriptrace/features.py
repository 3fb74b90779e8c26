"""Handcrafted writer features.

Three families are provided:

``fmm``
    16 macro features plus a 512-bin micro histogram (528 values).
``fdh``
    contour direction (12 bins) and contour hinge (300 bins) distributions
    (312 values).
``fdc``
    direction and curvature histograms between stroke-graph keypoints,
    4 x 200 bins (800 values).

Angles follow the usual image convention: measured from the horizontal
(column) axis, counter-clockwise, with rows growing downwards.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy import ndimage as ndi
from sklearn.base import BaseEstimator, TransformerMixin

from . import imaging
from .exceptions import DimensionMismatchError
from .page import PageAnalysis

DIRECTION_BINS = 12
DC_BINS = 200
FAMILY_DIMS = {"fmm": 16 + 512, "fdh": DIRECTION_BINS + 300, "fdc": 4 * DC_BINS}
FAMILIES = tuple(FAMILY_DIMS)


@dataclass
class FeatureVector:
    """A named real vector with the family that produced it."""

    id: str
    family: str
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        expected = FAMILY_DIMS.get(self.family)
        if expected is not None and self.values.size != expected:
            raise DimensionMismatchError(
                f"{self.family} vectors have {expected} values, got {self.values.size}"
            )

    @property
    def dim(self):
        return self.values.size


@dataclass(frozen=True)
class DirectionConfig:
    epsilon: int = 2
    bins_dh: int = DIRECTION_BINS
    bins_dc: int = DC_BINS

    def __post_init__(self):
        if self.epsilon < 2:
            raise ValueError("epsilon must be at least 2")
        if self.bins_dh * 15 != 180:
            raise ValueError("direction bins must be 15 degrees wide over 180 degrees")


def compute_epsilon(stats):
    """Contour step: ``max(2, floor(mean_width - std_width))``."""
    return max(2, int(math.floor(stats.mean_width - stats.std_width)))


def _normalize(hist):
    total = hist.sum()
    return hist / total if total > 0 else hist


def _angles(vectors, full_circle):
    """Angle in degrees of (drow, dcol) steps; rows grow downwards."""
    ang = np.degrees(np.arctan2(-vectors[:, 0], vectors[:, 1]))
    return np.mod(ang, 360.0 if full_circle else 180.0)


def _bin(angles, width, n):
    return np.clip(np.floor(angles / width + 1e-9).astype(int), 0, n - 1)


def contour_direction_hist(contours, epsilon, n_bins=DIRECTION_BINS):
    """Normalised histogram of contour directions over ``[0, 180)`` degrees.

    At each contour pixel the direction is that of the chord to the pixel
    ``epsilon`` steps further along the contour.
    """
    hist = np.zeros(n_bins)
    width = 180.0 / n_bins
    for contour in contours:
        pts = np.asarray(contour.points)
        n = len(pts)
        if n <= epsilon:
            continue
        step = pts[(np.arange(n) + epsilon) % n] - pts
        step = step[np.any(step != 0, axis=1)]
        if len(step):
            hist += np.bincount(
                _bin(_angles(step, False), width, n_bins), minlength=n_bins
            )
    return _normalize(hist)


def hinge_index(b1, b2, n_leg_bins=2 * DIRECTION_BINS):
    """Index of the unordered leg-bin pair ``b1 <= b2`` in the packed
    upper-triangular layout."""
    return b1 * n_leg_bins - b1 * (b1 - 1) // 2 + (b2 - b1)


def contour_hinge_hist(contours, epsilon, n_bins=DIRECTION_BINS):
    """Joint distribution of the two contour legs meeting at each pixel.

    Leg angles span the full circle in ``2 * n_bins`` bins of 15 degrees;
    pairs are ordered so that the first angle is not larger than the second,
    which leaves ``n_bins * (2 * n_bins + 1)`` cells.  Contours shorter than
    ``2 * epsilon + 1`` pixels are skipped.
    """
    legs = 2 * n_bins
    size = n_bins * (2 * n_bins + 1)
    hist = np.zeros(size)
    width = 360.0 / legs
    for contour in contours:
        pts = np.asarray(contour.points)
        n = len(pts)
        if n < 2 * epsilon + 1:
            continue
        idx = np.arange(n)
        fwd = pts[(idx + epsilon) % n] - pts
        back = pts[(idx - epsilon) % n] - pts
        ok = np.any(fwd != 0, axis=1) & np.any(back != 0, axis=1)
        if not ok.any():
            continue
        a = _bin(_angles(fwd[ok], True), width, legs)
        b = _bin(_angles(back[ok], True), width, legs)
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        hist += np.bincount(hinge_index(lo, hi, legs), minlength=size)
    return _normalize(hist)


def _graph_chains(graph):
    """Maximal keypoint sequences whose interior nodes have degree two.

    Open chains run from the raster-smaller end; cycles start at their
    raster-first node.  Returns ``(node_indices, cyclic)`` pairs.
    """
    deg = graph.degree()
    adj = [[] for _ in graph.nodes]
    for e in graph.edges:
        adj[e.u].append((e.id, e.v))
        if e.u != e.v:
            adj[e.v].append((e.id, e.u))
    pos = [tuple(n.position) for n in graph.nodes]
    used = set()
    chains = []

    def follow(start, eid, other):
        seq = [start, other]
        used.add(eid)
        cur = other
        while deg[cur] == 2 and cur != start:
            nxt = [(e, o) for e, o in adj[cur] if e not in used]
            if not nxt:
                break
            e, o = nxt[0]
            used.add(e)
            cur = o
            seq.append(cur)
        return seq

    order = sorted(range(len(pos)), key=lambda i: pos[i])
    for s in order:
        if deg[s] == 2:
            continue
        for eid, other in sorted(adj[s]):
            if eid in used:
                continue
            seq = follow(s, eid, other)
            if pos[seq[-1]] < pos[seq[0]]:
                seq.reverse()
            chains.append((seq, False))
    for s in order:
        for eid, other in sorted(adj[s]):
            if eid in used:
                continue
            seq = follow(s, eid, other)
            if seq[-1] == seq[0]:
                seq = seq[:-1]
            if len(seq) > 2 and pos[seq[-1]] < pos[seq[1]]:
                seq = [seq[0]] + seq[1:][::-1]
            chains.append((seq, True))
    return chains


def direction_curvature_events(graph):
    """Raw ``(cos, sin)`` direction pairs and ``(cos, sin)`` curvature pairs.

    Directions join consecutive keypoints of every chain; curvature is the
    turn between two consecutive directions of the same chain.
    """
    pos = np.array([n.position for n in graph.nodes], dtype=float).reshape(-1, 2)
    directions, curvatures = [], []
    for seq, cyclic in _graph_chains(graph):
        pairs = list(zip(seq[:-1], seq[1:]))
        if cyclic and len(seq) > 1:
            pairs.append((seq[-1], seq[0]))
        dirs = []
        for a, b in pairs:
            dx = pos[b, 1] - pos[a, 1]
            dy = -(pos[b, 0] - pos[a, 0])
            d = math.hypot(dx, dy)
            dirs.append((dx / d, dy / d) if d > 0 else None)
        directions.extend(v for v in dirs if v is not None)
        turns = list(zip(dirs[:-1], dirs[1:]))
        if cyclic and len(dirs) > 2:
            turns.append((dirs[-1], dirs[0]))
        for prev, cur in turns:
            if prev is None or cur is None:
                continue
            cc = cur[0] * prev[0] + cur[1] * prev[1]
            cs = cur[1] * prev[0] - cur[0] * prev[1]
            curvatures.append((cc, cs))
    return np.array(directions).reshape(-1, 2), np.array(curvatures).reshape(-1, 2)


def _value_hist(values, n_bins):
    if len(values) == 0:
        return np.zeros(n_bins)
    idx = np.clip(np.floor((np.asarray(values) + 1.0) / 2.0 * n_bins).astype(int), 0, n_bins - 1)
    return _normalize(np.bincount(idx, minlength=n_bins).astype(float))


def keypoint_direction_curvature(graph, n_bins=DC_BINS):
    """Concatenated histograms of direction cosine, direction sine,
    curvature cosine and curvature sine over ``[-1, 1]``."""
    if len(graph.nodes) < 2:
        return np.zeros(4 * n_bins)
    dirs, curv = direction_curvature_events(graph)
    return np.concatenate(
        [
            _value_hist(dirs[:, 0], n_bins),
            _value_hist(dirs[:, 1], n_bins),
            _value_hist(curv[:, 0], n_bins),
            _value_hist(curv[:, 1], n_bins),
        ]
    )


# ---------------------------------------------------------------------------
# macro / micro features


def _cells(n):
    edges = np.linspace(0, n, 5).round().astype(int)
    return list(zip(edges[:-1], edges[1:]))


def _gradient_bits(ch):
    img = ch.astype(float)
    gx = ndi.sobel(img, axis=1)
    gy = ndi.sobel(img, axis=0)
    mag = np.hypot(gx, gy)
    ang = np.mod(np.degrees(np.arctan2(-gy, gx)), 360.0)
    bins = _bin(ang, 30.0, 12)
    out = np.zeros((4, 4, 12), dtype=bool)
    for i, (r0, r1) in enumerate(_cells(ch.shape[0])):
        for j, (c0, c1) in enumerate(_cells(ch.shape[1])):
            m = mag[r0:r1, c0:c1].ravel()
            if m.sum() <= 0:
                continue
            h = np.bincount(bins[r0:r1, c0:c1].ravel(), weights=m, minlength=12)
            out[i, j] = h > h.mean()
    return out.ravel()


def _structural_bits(ch):
    n, ne, e, se, s, sw, w, nw = imaging._neighbour_stack(ch)
    deg = n.astype(int) + ne + e + se + s + sw + w + nw
    four = n.astype(int) + e + s + w
    boundary = ch & (four < 4)
    pats = [
        w & e,
        n & s,
        ne & sw,
        nw & se,
        n & e & ~s & ~w,
        e & s & ~n & ~w,
        s & w & ~n & ~e,
        w & n & ~s & ~e,
        (deg == 1) & (n | ne | nw),
        (deg == 1) & (s | se | sw),
        (deg == 1) & (e | w),
        four == 3,
    ]
    out = np.zeros((4, 4, 12), dtype=bool)
    for i, (r0, r1) in enumerate(_cells(ch.shape[0])):
        for j, (c0, c1) in enumerate(_cells(ch.shape[1])):
            nb = boundary[r0:r1, c0:c1]
            total = nb.sum()
            if total == 0:
                continue
            for k, pat in enumerate(pats):
                cnt = (pat[r0:r1, c0:c1] & nb).sum()
                out[i, j, k] = cnt >= max(1.0, 0.1 * total)
    return out.ravel()


def _concavity_bits(ch):
    h, w = ch.shape
    up = np.maximum.accumulate(ch, axis=0)
    down = np.maximum.accumulate(ch[::-1], axis=0)[::-1]
    left = np.maximum.accumulate(ch, axis=1)
    right = np.maximum.accumulate(ch[:, ::-1], axis=1)[:, ::-1]
    bg = ~ch
    hits = [up, down, left, right]
    # open in one direction, closed in the other three
    opens = []
    for k in range(4):
        others = [hits[j] for j in range(4) if j != k]
        opens.append(bg & ~hits[k] & others[0] & others[1] & others[2])
    hole = bg & up & down & left & right
    run_h = ndi.binary_opening(ch, structure=np.ones((1, max(2, w // 8)), bool))
    run_v = ndi.binary_opening(ch, structure=np.ones((max(2, h // 8), 1), bool))
    out = np.zeros((4, 4, 8), dtype=bool)
    for i, (r0, r1) in enumerate(_cells(h)):
        for j, (c0, c1) in enumerate(_cells(w)):
            area = (r1 - r0) * (c1 - c0)
            if area == 0:
                continue
            frac = lambda m: m[r0:r1, c0:c1].sum() / area  # noqa: E731
            out[i, j, 0] = frac(ch) > 0.25
            out[i, j, 1] = frac(run_h) > 0.1
            out[i, j, 2] = frac(run_v) > 0.1
            for k in range(4):
                out[i, j, 3 + k] = frac(opens[k]) > 0.1
            out[i, j, 7] = frac(hole) > 0.05
    return out.ravel()


def micro_bits(char_mask):
    """512 binary gradient/structural/concavity features of one character."""
    ch = np.pad(np.asarray(char_mask, dtype=bool), 1)
    return np.concatenate([_gradient_bits(ch), _structural_bits(ch), _concavity_bits(ch)])


def _chain_slope_fractions(contours):
    counts = np.zeros(4)
    for contour in contours:
        pts = np.asarray(contour.points)
        if len(pts) < 2:
            continue
        step = np.roll(pts, -1, axis=0) - pts
        step = step[np.any(step != 0, axis=1)]
        octant = np.rint(_angles(step, True) / 45.0).astype(int) % 4
        # 0: horizontal, 1: positive slope, 2: vertical, 3: negative slope
        counts += np.bincount(octant, minlength=4)
    if counts.sum() == 0:
        return np.zeros(4)
    frac = counts / counts.sum()
    return np.array([frac[2], frac[3], frac[1], frac[0]])


def _mean_slant(contours, epsilon):
    devs = []
    for contour in contours:
        pts = np.asarray(contour.points)
        n = len(pts)
        if n <= epsilon:
            continue
        step = pts[(np.arange(n) + epsilon) % n] - pts
        step = step[np.any(step != 0, axis=1)]
        ang = _angles(step, False)
        near = np.abs(ang - 90.0) < 45.0
        devs.append(np.abs(ang[near] - 90.0))
    if not devs:
        return 0.0
    allv = np.concatenate(devs)
    return float(allv.mean() / 45.0) if allv.size else 0.0


def macro_features(page):
    """Sixteen dimensionless page descriptors (see module docstring)."""
    mask = page.mask
    h, w = mask.shape
    layout = page.layout
    chars = layout.characters
    f = np.zeros(16)
    hist = np.bincount(page.gray.ravel(), minlength=256) / page.gray.size
    nz = hist[hist > 0]
    f[0] = float(-(nz * np.log2(nz)).sum() / 8.0)
    f[1] = page.threshold / 255.0
    f[2] = float(mask.mean())
    if chars:
        contours = page.contours
        f[3] = sum(c.kind == "interior" for c in contours) / len(chars)
        f[4] = sum(c.kind == "exterior" for c in contours) / len(chars)
    if mask.any():
        f[5:9] = _chain_slope_fractions(page.contours)
        f[9] = _mean_slant(page.contours, page.epsilon)
        rows = np.flatnonzero(mask.any(axis=1))
        cols = np.flatnonzero(mask.any(axis=0))
        f[11] = (rows[-1] - rows[0] + 1) / (cols[-1] - cols[0] + 1)
        f[12] = cols[0] / w
    if layout.lines:
        heights = np.array([ln.height for ln in layout.lines], dtype=float)
        f[10] = heights.mean() / h
        upper, lower = [], []
        for ln in layout.lines:
            r0, c0, r1, c1 = ln.bbox
            band = layout.kept[r0:r1, c0:c1]
            total = band.sum()
            third = max(1, (r1 - r0) // 3)
            if total:
                upper.append(band[:third].sum() / total)
                lower.append(band[-third:].sum() / total)
        if upper:
            f[13] = float(np.mean(upper))
            f[14] = float(np.mean(lower))
        if layout.words:
            widths = np.array([b[3] - b[1] for b in layout.words], dtype=float)
            f[15] = widths.mean() / heights.mean()
    return f


def micro_histogram(page):
    """Sum of per-character micro bits divided by the character count."""
    chars = page.layout.characters
    if not chars:
        return np.zeros(512)
    acc = np.zeros(512)
    labels = page.layout.labels
    for ch in chars:
        r0, c0, r1, c1 = ch.bbox
        sub = np.isin(labels[r0:r1, c0:c1], ch.component_ids)
        acc += micro_bits(sub)
    return acc / len(chars)


def _as_page(image):
    return image if isinstance(image, PageAnalysis) else PageAnalysis(image)


def extract_fmm(image, sample_id="page"):
    page = _as_page(image)
    values = np.concatenate([macro_features(page), micro_histogram(page)])
    return FeatureVector(sample_id, "fmm", values)


def extract_fdh(image, sample_id="page", epsilon=None):
    page = _as_page(image)
    eps = page.epsilon if epsilon is None else epsilon
    values = np.concatenate(
        [contour_direction_hist(page.contours, eps), contour_hinge_hist(page.contours, eps)]
    )
    return FeatureVector(sample_id, "fdh", values)


def extract_fdc(image, sample_id="page"):
    page = _as_page(image)
    return FeatureVector(sample_id, "fdc", keypoint_direction_curvature(page.graph))


EXTRACTORS = {"fmm": extract_fmm, "fdh": extract_fdh, "fdc": extract_fdc}


def extract(family, image, sample_id="page", **kwargs):
    try:
        fn = EXTRACTORS[family]
    except KeyError:
        raise ValueError(f"unknown feature family {family!r}; use one of {FAMILIES}") from None
    return fn(image, sample_id, **kwargs)


class HandcraftedFeatures(TransformerMixin, BaseEstimator):
    """Transform page or patch images into handcrafted feature rows.

    Parameters
    ----------
    family : {"fmm", "fdh", "fdc"}
        Feature family to compute.
    epsilon : int, optional
        Fixed contour step for ``fdh``; by default it is derived from each
        image's stroke width.
    """

    def __init__(self, family="fdh", epsilon=None):
        self.family = family
        self.epsilon = epsilon

    def fit(self, X=None, y=None):
        if self.family not in FAMILY_DIMS:
            raise ValueError(f"unknown feature family {self.family!r}")
        self.n_features_out_ = FAMILY_DIMS[self.family]
        return self

    def transform(self, X):
        kwargs = {"epsilon": self.epsilon} if self.family == "fdh" else {}
        rows = [extract(self.family, img, **kwargs).values for img in X]
        return np.vstack(rows) if rows else np.zeros((0, FAMILY_DIMS[self.family]))
