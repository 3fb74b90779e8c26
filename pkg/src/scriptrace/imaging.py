"""Pixel-level preprocessing of handwriting pages.

Images are plain numpy arrays: grayscale pages are ``uint8`` with dark ink on
light paper, binary images are boolean masks with ``True`` marking ink.  All
neighbourhoods are 8-connected.
"""

from dataclasses import dataclass, field
import math

import cv2
import numpy as np
from scipy import ndimage as ndi

from .exceptions import EmptyInkError
from .validation import check_binary_image, check_gray_image

EIGHT = np.ones((3, 3), dtype=bool)

# Zhang-Suen neighbours P2..P9: N, NE, E, SE, S, SW, W, NW.
_OFFSETS = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))

CURVE_CHORD = 5
CURVE_MIN_TURN_DEG = 45.0


@dataclass(frozen=True)
class Skeleton:
    """A thinned ink mask and its stroke length in pixels."""

    image: np.ndarray
    stroke_length_px: int

    @classmethod
    def from_mask(cls, mask):
        mask = check_binary_image(mask)
        return cls(mask, int(mask.sum()))


@dataclass(frozen=True)
class StrokeStats:
    mean_width: float
    std_width: float


@dataclass(frozen=True)
class Contour:
    """Closed 8-connected boundary chain; ``points`` holds (row, col) pairs."""

    points: np.ndarray
    kind: str  # "exterior" | "interior"

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class Keypoint:
    """A structural point; ``pixels`` lists every skeleton pixel it owns.

    Branch points own the whole 8-connected cluster of junction pixels,
    ``position`` being its representative pixel.
    """

    position: tuple
    kind: str  # "end" | "branch" | "curved"
    pixels: tuple = ()

    def __post_init__(self):
        if not self.pixels:
            object.__setattr__(self, "pixels", (tuple(self.position),))


@dataclass(frozen=True)
class Edge:
    """Skeleton path between two keypoints; ``path`` excludes the node pixels."""

    id: int
    u: int
    v: int
    path: np.ndarray

    @property
    def length(self):
        return len(self.path)


@dataclass
class StrokeGraph:
    nodes: list
    edges: list
    component_count: int
    shape: tuple = field(default=(0, 0))

    def degree(self):
        deg = np.zeros(len(self.nodes), dtype=int)
        for e in self.edges:
            deg[e.u] += 1
            deg[e.v] += 1
        return deg

    def edge_mask(self, edge_ids):
        out = np.zeros(self.shape, dtype=bool)
        by_id = {e.id: e for e in self.edges}
        for eid in edge_ids:
            path = by_id[eid].path
            if len(path):
                out[path[:, 0], path[:, 1]] = True
        return out


# ---------------------------------------------------------------------------
# neighbourhood lookup tables


def _ring_tables():
    zs = [np.zeros(256, dtype=bool), np.zeros(256, dtype=bool)]
    simple = np.zeros(256, dtype=bool)
    degree = np.zeros(256, dtype=np.int8)
    four = {0, 2, 4, 6}
    for code in range(256):
        p = [(code >> k) & 1 for k in range(8)]
        b = sum(p)
        a = sum(1 for k in range(8) if p[k] == 0 and p[(k + 1) % 8] == 1)
        p2, p3, p4, p5, p6, p7, p8, p9 = p
        base = 2 <= b <= 6 and a == 1
        zs[0][code] = base and p2 * p4 * p6 == 0 and p4 * p6 * p8 == 0
        zs[1][code] = base and p2 * p4 * p8 == 0 and p2 * p6 * p8 == 0
        degree[code] = b
        simple[code] = (
            _ring_components(p, 1, chebyshev=True) == 1
            and _ring_components(p, 0, chebyshev=False, anchor=four) == 1
        )
    return zs, simple, degree


def _ring_components(p, value, chebyshev, anchor=None):
    pts = [k for k in range(8) if p[k] == value]
    seen = set()
    count = 0
    for start in pts:
        if start in seen:
            continue
        stack = [start]
        comp = set()
        while stack:
            k = stack.pop()
            if k in comp:
                continue
            comp.add(k)
            for j in pts:
                if j in comp:
                    continue
                dr = abs(_OFFSETS[k][0] - _OFFSETS[j][0])
                dc = abs(_OFFSETS[k][1] - _OFFSETS[j][1])
                near = max(dr, dc) == 1 if chebyshev else dr + dc == 1
                if near:
                    stack.append(j)
        seen |= comp
        if anchor is None or comp & anchor:
            count += 1
    return count


_ZS_LUT, _SIMPLE_LUT, _DEGREE_LUT = _ring_tables()
_WEIGHTS = np.array([1 << k for k in range(8)], dtype=np.int32)


def _neighbour_stack(mask):
    p = np.pad(mask, 1)
    h, w = mask.shape
    return np.stack([p[1 + dr:1 + dr + h, 1 + dc:1 + dc + w] for dr, dc in _OFFSETS])


def neighbour_codes(mask):
    """8-bit code of each pixel's ring of neighbours (bit k = P(k+2))."""
    nb = _neighbour_stack(np.asarray(mask, dtype=bool)).astype(np.int32)
    return np.tensordot(_WEIGHTS, nb, axes=1).astype(np.uint8)


def neighbour_count(mask):
    mask = np.asarray(mask, dtype=bool)
    return _DEGREE_LUT[neighbour_codes(mask)] * mask


def _local_code(mask, r, c):
    code = 0
    for k, (dr, dc) in enumerate(_OFFSETS):
        if mask[r + dr, c + dc]:
            code |= 1 << k
    return code


def _neighbours(mask, r, c):
    return [(r + dr, c + dc) for dr, dc in _OFFSETS if mask[r + dr, c + dc]]


# ---------------------------------------------------------------------------
# binarization and labeling


def otsu_threshold(gray):
    """Otsu threshold ``t``; ink is every pixel with intensity ``< t``.

    Returns the first maximiser of the between-class variance over
    ``t = 0..255``.  A constant image returns its own intensity.
    """
    gray = check_gray_image(gray)
    hist = np.bincount(gray.ravel(), minlength=256).astype(np.int64)
    levels = np.arange(256, dtype=np.int64)
    n = int(hist.sum())
    total = int((hist * levels).sum())
    # class 0 = intensities < t
    w0 = np.concatenate(([0], np.cumsum(hist)[:-1]))
    s0 = np.concatenate(([0], np.cumsum(hist * levels)[:-1]))
    w1 = n - w0
    diff = (n * s0 - w0 * total).astype(float)
    denom = (w0 * w1).astype(float)
    valid = denom > 0
    if not valid.any():
        return int(gray.flat[0])
    score = np.full(256, -1.0)
    score[valid] = diff[valid] ** 2 / denom[valid]
    return int(np.argmax(score))


def binarize(gray):
    """Otsu binarization; returns ``(ink_mask, threshold)``."""
    gray = check_gray_image(gray)
    t = otsu_threshold(gray)
    return gray < t, t


def label_components(img):
    """8-connected labeling; returns ``(labels, count)`` with 0 = background."""
    mask = check_binary_image(img)
    labels, count = ndi.label(mask, structure=EIGHT)
    return labels, int(count)


def component_count(img):
    return label_components(img)[1]


def remove_small_components(img, min_area):
    """Drop 8-connected components with fewer than ``min_area`` pixels."""
    labels, count = label_components(img)
    if count == 0:
        return check_binary_image(img).copy()
    areas = np.bincount(labels.ravel(), minlength=count + 1)
    keep = areas >= min_area
    keep[0] = False
    return keep[labels]


# ---------------------------------------------------------------------------
# thinning


def _sequential_simple_delete(mask, coords):
    """Delete, in order, every pixel still simple and not an end point."""
    deleted = 0
    for r, c in coords:
        if not mask[r, c]:
            continue
        code = _local_code(mask, r, c)
        if _SIMPLE_LUT[code] and _DEGREE_LUT[code] >= 2:
            mask[r, c] = False
            deleted += 1
    return deleted


def _guarded_delete(mask, cand):
    """Parallel deletion that never splits or erases a component.

    Components that the parallel step would split or wipe out fall back to
    sequential simple-point deletion of their candidates.
    """
    new = mask & ~cand
    old_lab, n_old = ndi.label(mask, structure=EIGHT)
    new_lab, n_new = ndi.label(new, structure=EIGHT)
    pairs = np.unique(old_lab[new].astype(np.int64) * (n_new + 1) + new_lab[new])
    per_old = np.bincount(pairs // (n_new + 1), minlength=n_old + 1)
    bad = np.flatnonzero(per_old[1:] != 1) + 1
    deleted = int(cand.sum())
    if bad.size:
        hold = cand & np.isin(old_lab, bad)
        new |= hold
        deleted -= int(hold.sum())
        deleted += _sequential_simple_delete(new, np.argwhere(hold))
    mask[...] = new
    return deleted


def _remove_redundant(mask):
    """Strip simple non-end pixels until the skeleton is 8-minimal."""
    while True:
        code = neighbour_codes(mask)
        cand = mask & _SIMPLE_LUT[code] & (_DEGREE_LUT[code] >= 2)
        if not cand.any():
            return
        if _sequential_simple_delete(mask, np.argwhere(cand)) == 0:
            return


def thin(img):
    """Zhang-Suen thinning to a one-pixel-wide, 8-minimal skeleton.

    The two classic sub-iterations run until neither deletes a pixel.  A
    connectivity guard keeps 2x2 blocks and two-pixel diagonals from being
    erased, and a final pass drops redundant staircase corners so that
    every path pixel has exactly two neighbours.
    """
    mask = np.pad(check_binary_image(img), 1).copy()
    while True:
        changed = False
        for step in (0, 1):
            cand = mask & _ZS_LUT[step][neighbour_codes(mask)]
            if cand.any() and _guarded_delete(mask, cand):
                changed = True
        if not changed:
            break
    _remove_redundant(mask)
    return Skeleton.from_mask(mask[1:-1, 1:-1].copy())


def _walk_spur(mask, start, limit):
    """Pixels of the end-to-branch path from ``start`` if shorter than ``limit``."""
    path = [start]
    seen = {start}
    cur = start
    while True:
        nbrs = _neighbours(mask, *cur)
        if cur != start and len(nbrs) >= 3:
            spur = path[:-1]
            return spur if len(spur) < limit else None
        if len(path) >= limit:
            return None
        nxt = [p for p in nbrs if p not in seen]
        if len(nxt) != 1:
            return None
        cur = nxt[0]
        path.append(cur)
        seen.add(cur)


def prune_spurs(sk, stats):
    """Remove end-to-branch paths shorter than ``ceil(mean_width / 2)`` pixels.

    Spurs are removed one at a time, re-reading neighbour counts after each
    removal, until no spur remains.
    """
    limit = math.ceil(stats.mean_width / 2)
    mask = np.pad(check_binary_image(sk.image), 1).copy()
    while True:
        changed = False
        ends = np.argwhere(mask & (neighbour_count(mask) == 1))
        for r, c in ends:
            if not mask[r, c] or len(_neighbours(mask, r, c)) != 1:
                continue
            spur = _walk_spur(mask, (int(r), int(c)), limit)
            if spur:
                for p in spur:
                    mask[p] = False
                changed = True
        if not changed:
            break
        _remove_redundant(mask)
    return Skeleton.from_mask(mask[1:-1, 1:-1].copy())


def stroke_width_stats(img, sk):
    """Mean and standard deviation of stroke width sampled on the skeleton.

    Width at a skeleton pixel is ``2 * d - 1`` where ``d`` is its Euclidean
    distance to the nearest background pixel, so a one-pixel line has
    width 1 and a solid bar of odd width ``w`` measures ``w`` on its axis.
    """
    mask = check_binary_image(img)
    skel = check_binary_image(sk.image)
    if not skel.any():
        raise EmptyInkError("skeleton has no ink pixels")
    dist = ndi.distance_transform_edt(np.pad(mask, 1))[1:-1, 1:-1]
    widths = np.rint(2.0 * dist[skel] - 1.0)
    widths = np.maximum(widths, 1.0)
    return StrokeStats(float(widths.mean()), float(widths.std()))


# ---------------------------------------------------------------------------
# contours


def trace_contours(img):
    """Border-following contours: one exterior per component, one per hole."""
    mask = np.pad(check_binary_image(img), 1).astype(np.uint8)
    found, hierarchy = cv2.findContours(mask, cv2.RETR_CCOMP, cv2.CHAIN_APPROX_NONE)
    out = []
    if hierarchy is None:
        return out
    for pts, h in zip(found, hierarchy[0]):
        xy = pts.reshape(-1, 2)
        rc = np.stack([xy[:, 1] - 1, xy[:, 0] - 1], axis=1).astype(np.int64)
        out.append(Contour(rc, "exterior" if h[3] < 0 else "interior"))
    return out


def euler_number(img):
    """Euler number (components minus holes) for 8-connected ink."""
    count = component_count(img)
    background = ~np.pad(check_binary_image(img), 1)
    _, n_bg = ndi.label(background)  # 4-connected background
    return count - (n_bg - 1)


# ---------------------------------------------------------------------------
# keypoints and stroke graph


def _trace_segments(mask, node_mask):
    """Ordered runs of non-node skeleton pixels (both masks padded by 1).

    Returns ``(u, pixels, v, closed)`` tuples where ``u``/``v`` are the node
    pixels touching the first and last pixel (``None`` if absent).
    """
    free = mask & ~node_mask
    visited = np.zeros_like(free)
    segments = []

    def node_nbrs(p):
        return [q for q in _neighbours(node_mask, *p)]

    def walk(start):
        path = [start]
        visited[start] = True
        cur = start
        while True:
            nxt = [q for q in _neighbours(free, *cur) if not visited[q]]
            if not nxt:
                return path
            cur = nxt[0]
            visited[cur] = True
            path.append(cur)

    touching = free & ndi.binary_dilation(node_mask, structure=EIGHT)
    for r, c in np.argwhere(touching):
        start = (int(r), int(c))
        if visited[start]:
            continue
        path = walk(start)
        first = node_nbrs(path[0])
        last = node_nbrs(path[-1])
        u = first[0] if first else None
        if len(path) == 1:
            v = first[1] if len(first) > 1 else u
        else:
            others = [q for q in last if q != u]
            v = others[0] if others else (last[0] if last else None)
        segments.append((u, path, v, False))
    for r, c in np.argwhere(free & ~visited):
        start = (int(r), int(c))
        if visited[start]:
            continue
        path = walk(start)
        closed = len(path) > 2 and max(
            abs(path[0][0] - path[-1][0]), abs(path[0][1] - path[-1][1])
        ) == 1
        segments.append((None, path, None, closed))
    return segments


def _turn_angles(seq, cyclic, chord):
    pts = np.asarray(seq, dtype=float)
    n = len(pts)
    idx = np.arange(n)
    if cyclic:
        prev_i, next_i = (idx - chord) % n, (idx + chord) % n
        valid = np.full(n, n > 2 * chord)
    else:
        prev_i, next_i = np.clip(idx - chord, 0, n - 1), np.clip(idx + chord, 0, n - 1)
        valid = (idx >= chord) & (idx + chord < n)
    v1 = pts - pts[prev_i]
    v2 = pts[next_i] - pts
    norm = np.linalg.norm(v1, axis=1) * np.linalg.norm(v2, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.where(norm > 0, (v1 * v2).sum(axis=1) / norm, 1.0)
    ang = np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))
    ang[~valid] = 0.0
    return ang


def _curved_points(seq, eligible, cyclic):
    ang = _turn_angles(seq, cyclic, CURVE_CHORD)
    hit = (ang >= CURVE_MIN_TURN_DEG - 1e-9) & eligible
    if cyclic and hit.any() and not hit.all():
        # start on a non-turning pixel so no run wraps around
        shift = int(np.argmin(hit))
        seq = seq[shift:] + seq[:shift]
        ang, hit = np.roll(ang, -shift), np.roll(hit, -shift)
    picks = []
    i, n = 0, len(seq)
    while i < n:
        if not hit[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and hit[j + 1]:
            j += 1
        best = i + int(np.argmax(ang[i:j + 1]))
        picks.append(seq[best])
        i = j + 1
    return picks


def _branch_clusters(branches, deg):
    """Group 8-adjacent junction pixels; representative = highest degree,
    then nearest to the cluster centroid, then raster order."""
    labels, count = ndi.label(branches, structure=EIGHT)
    out = []
    for lab in range(1, count + 1):
        pix = [tuple(int(x) for x in p) for p in np.argwhere(labels == lab)]
        cen = np.mean(pix, axis=0)
        rep = min(
            pix,
            key=lambda p: (-deg[p], (p[0] - cen[0]) ** 2 + (p[1] - cen[1]) ** 2, p),
        )
        out.append((rep, tuple(sorted(pix))))
    return out


def detect_keypoints(sk):
    """End, branch and curved points of a skeleton, sorted in raster order.

    Ends have at most one neighbour.  Pixels with three or more neighbours
    form junction clusters, each reported as one branch keypoint owning all
    its pixels.  A path pixel is curved where the chords to the pixels five
    steps behind and ahead turn by at least 45 degrees (one pixel per
    turning run).  A closed loop without any keypoint receives its
    raster-first pixel as a curved point.
    """
    mask = np.pad(check_binary_image(sk.image), 1)
    deg = neighbour_count(mask)
    ends = mask & (deg <= 1)
    branches = mask & (deg >= 3)
    found = {}
    for r, c in np.argwhere(ends):
        found[(int(r), int(c))] = ("end", ((int(r), int(c)),))
    for rep, pix in _branch_clusters(branches, deg):
        found[rep] = ("branch", pix)
    for u, path, v, closed in _trace_segments(mask, ends | branches):
        if u is None and v is None:
            cyclic = closed
            seq = path
            eligible = np.ones(len(seq), dtype=bool)
        else:
            cyclic = False
            seq = ([u] if u is not None else []) + path + ([v] if v is not None else [])
            eligible = np.ones(len(seq), dtype=bool)
            if u is not None:
                eligible[0] = False
            if v is not None:
                eligible[-1] = False
        picks = _curved_points(seq, eligible, cyclic)
        if not picks and u is None and v is None:
            picks = [min(path)]
        for p in picks:
            found.setdefault(p, ("curved", (p,)))
    return [
        Keypoint((r - 1, c - 1), kind, tuple((a - 1, b - 1) for a, b in pix))
        for (r, c), (kind, pix) in sorted(found.items())
    ]


def build_stroke_graph(sk, keypoints):
    """Keypoint graph whose edges are the keypoint-free skeleton paths.

    Every skeleton pixel belongs either to exactly one keypoint or to
    exactly one edge path; 8-adjacent keypoints are joined by an edge with
    an empty path.
    """
    mask = np.pad(check_binary_image(sk.image), 1)
    node_mask = np.zeros_like(mask)
    index = {}
    for i, kp in enumerate(keypoints):
        for r, c in kp.pixels:
            p = (r + 1, c + 1)
            if not mask[p]:
                raise ValueError(f"keypoint pixel {(r, c)} is not on skeleton ink")
            node_mask[p] = True
            index[p] = i
    edges = []
    for u, path, v, _ in _trace_segments(mask, node_mask):
        if u is None or v is None:
            raise ValueError("keypoints do not terminate every skeleton path")
        arr = np.asarray(path, dtype=np.int64) - 1
        edges.append(Edge(len(edges), index[u], index[v], arr))
    touching = set()
    for p, i in sorted(index.items()):
        for q in _neighbours(node_mask, *p):
            j = index[q]
            if j > i:
                touching.add((i, j))
    for i, j in sorted(touching):
        edges.append(Edge(len(edges), i, j, np.empty((0, 2), dtype=np.int64)))
    _, count = ndi.label(mask, structure=EIGHT)
    return StrokeGraph(list(keypoints), edges, int(count), tuple(sk.image.shape))


def skeleton_graph(sk):
    """Convenience: keypoints and graph of an (already pruned) skeleton."""
    kps = detect_keypoints(sk)
    return build_stroke_graph(sk, kps)
