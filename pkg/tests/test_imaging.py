from collections import deque

import cv2
import numpy as np
import pytest
from hypothesis import given, strategies as st

from scriptrace import imaging
from scriptrace.exceptions import EmptyInkError

from conftest import glyph_set


# -- oracles ---------------------------------------------------------------


def otsu_bruteforce(gray):
    """First t maximising between-class variance with class 0 = values < t."""
    v = gray.ravel().astype(float)
    best, best_t = -1.0, None
    for t in range(256):
        lo, hi = v[v < t], v[v >= t]
        if lo.size == 0 or hi.size == 0:
            continue
        score = lo.size * hi.size * (lo.mean() - hi.mean()) ** 2
        if score > best * (1 + 1e-12) + 1e-12:
            best, best_t = score, t
    return best_t


def flood_fill_labels(mask):
    labels = np.zeros(mask.shape, int)
    n = 0
    for r, c in zip(*np.nonzero(mask)):
        if labels[r, c]:
            continue
        n += 1
        labels[r, c] = n
        queue = deque([(r, c)])
        while queue:
            y, x = queue.popleft()
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    yy, xx = y + dy, x + dx
                    if (0 <= yy < mask.shape[0] and 0 <= xx < mask.shape[1]
                            and mask[yy, xx] and not labels[yy, xx]):
                        labels[yy, xx] = n
                        queue.append((yy, xx))
    return labels, n


def zhang_suen_textbook(mask):
    img = np.pad(mask.astype(np.uint8), 1)
    changed = True
    while changed:
        changed = False
        for step in (0, 1):
            marked = []
            for r in range(1, img.shape[0] - 1):
                for c in range(1, img.shape[1] - 1):
                    if not img[r, c]:
                        continue
                    p = [img[r - 1, c], img[r - 1, c + 1], img[r, c + 1], img[r + 1, c + 1],
                         img[r + 1, c], img[r + 1, c - 1], img[r, c - 1], img[r - 1, c - 1]]
                    b = sum(p)
                    a = sum(p[k] == 0 and p[(k + 1) % 8] == 1 for k in range(8))
                    if step == 0:
                        cond = p[0] * p[2] * p[4] == 0 and p[2] * p[4] * p[6] == 0
                    else:
                        cond = p[0] * p[2] * p[6] == 0 and p[0] * p[4] * p[6] == 0
                    if 2 <= b <= 6 and a == 1 and cond:
                        marked.append((r, c))
            for r, c in marked:
                img[r, c] = 0
            changed |= bool(marked)
    return img[1:-1, 1:-1].astype(bool)


def euler_quads(mask):
    """Bit-quad Euler number for 8-connected foreground."""
    m = np.pad(mask.astype(int), 1)
    q = np.stack([m[:-1, :-1], m[:-1, 1:], m[1:, :-1], m[1:, 1:]])
    s = q.sum(0)
    diag = ((q[0] == q[3]) & (q[1] == q[2]) & (q[0] != q[1]) & (s == 2))
    return int(((s == 1).sum() - (s == 3).sum() - 2 * diag.sum()) // 4)


def same_partition(a, b):
    pairs = set(zip(a[a > 0].tolist(), b[b > 0].tolist()))
    return (len(pairs) == len({x for x, _ in pairs}) == len({y for _, y in pairs})
            and np.array_equal(a > 0, b > 0))


def neighbours(mask, r, c):
    win = np.pad(mask, 1)[r:r + 3, c:c + 3]
    return int(win.sum()) - 1


# -- binarization ----------------------------------------------------------


def test_blank_page_has_no_ink():
    mask, t = imaging.binarize(np.full((20, 30), 255, np.uint8))
    assert t == 255 and not mask.any()


def test_bimodal_split():
    img = np.full((10, 20), 255, np.uint8)
    img[:, :10] = 0
    mask, t = imaging.binarize(img)
    assert 0 < t <= 255
    assert mask[:, :10].all() and not mask[:, 10:].any()


@pytest.mark.parametrize("seed", range(5))
def test_otsu_matches_exhaustive_search(seed):
    rng = np.random.default_rng(seed)
    glyph = glyph_set(1, seed=seed)[0]
    gray = np.where(glyph, 40.0, 220.0)
    gray = cv2.GaussianBlur(gray, (7, 7), 1.5) + rng.normal(0, 6, gray.shape)
    gray = np.clip(np.rint(gray), 0, 255).astype(np.uint8)
    assert imaging.otsu_threshold(gray) == otsu_bruteforce(gray)


# -- components ------------------------------------------------------------


def test_component_counts():
    assert imaging.component_count(np.zeros((5, 5), bool)) == 0
    m = np.zeros((10, 10), bool)
    m[1:4, 1:4] = True
    m[6:9, 6:9] = True
    labels, n = imaging.label_components(m)
    assert n == 2 and labels[2, 2] != labels[7, 7]


@pytest.mark.parametrize("seed", range(10))
def test_labels_match_flood_fill(seed):
    m = np.random.default_rng(seed).random((32, 32)) < 0.45
    labels, n = imaging.label_components(m)
    ref, n_ref = flood_fill_labels(m)
    assert n == n_ref
    assert same_partition(labels, ref)


# -- thinning and pruning --------------------------------------------------


def test_bar_thins_to_a_connected_line():
    bar = np.zeros((7, 26), bool)
    bar[2:5, 3:23] = True
    sk = imaging.thin(bar)
    # both sub-iterations eat one pixel off each end of a 3-wide bar
    assert sk.stroke_length_px == sk.image.sum() == 17
    assert np.array_equal(sk.image, zhang_suen_textbook(bar))
    assert set(np.nonzero(sk.image)[0]) == {3}
    assert imaging.component_count(sk.image) == 1


def test_single_pixel_is_unchanged():
    m = np.zeros((5, 5), bool)
    m[2, 2] = True
    assert np.array_equal(imaging.thin(m).image, m)


def test_thinning_is_idempotent(glyphs):
    for g in glyphs:
        once = imaging.thin(g).image
        assert np.array_equal(imaging.thin(once).image, once)


def test_thinning_and_pruning_keep_components(glyphs):
    for g in glyphs:
        sk = imaging.thin(g)
        assert imaging.component_count(sk.image) == imaging.component_count(g)
        pruned = imaging.prune_spurs(sk, imaging.stroke_width_stats(g, sk))
        assert imaging.component_count(pruned.image) == imaging.component_count(g)


def test_skeleton_is_one_pixel_wide(glyphs):
    for g in glyphs:
        sk = imaging.thin(g).image.astype(int)
        blocks = sk[:-1, :-1] + sk[1:, :-1] + sk[:-1, 1:] + sk[1:, 1:]
        assert blocks.max(initial=0) < 4


def _spur_skeleton(spur):
    m = np.zeros((30, 40), bool)
    m[15, 5:35] = True
    m[15 - spur:15, 20] = True
    return imaging.Skeleton.from_mask(m)


def test_short_spur_is_removed():
    out = imaging.prune_spurs(_spur_skeleton(2), imaging.StrokeStats(8.0, 0.0))
    assert not out.image[13:15, 20].any()
    assert out.image[15, 5:35].all()


def test_long_spur_is_kept():
    out = imaging.prune_spurs(_spur_skeleton(5), imaging.StrokeStats(8.0, 0.0))
    assert out.image[10:15, 20].all()


def test_no_short_spur_survives(glyphs):
    for g in glyphs[:20]:
        sk = imaging.thin(g)
        stats = imaging.stroke_width_stats(g, sk)
        pruned = imaging.prune_spurs(sk, stats)
        limit = int(np.ceil(stats.mean_width / 2))
        mask = np.pad(pruned.image, 1)
        for r, c in np.argwhere(mask):
            if neighbours(mask[1:-1, 1:-1], r - 1, c - 1) == 1:
                assert imaging._walk_spur(mask, (int(r), int(c)), limit) is None


# -- stroke width ----------------------------------------------------------


def test_stroke_width_of_bars():
    m = np.zeros((20, 60), bool)
    m[5:10, 5:55] = True
    s = imaging.stroke_width_stats(m, imaging.thin(m))
    assert abs(s.mean_width - 5) <= 1 and s.std_width < 0.5

    line = np.zeros((5, 30), bool)
    line[2, 2:28] = True
    s = imaging.stroke_width_stats(line, imaging.thin(line))
    assert s == imaging.StrokeStats(1.0, 0.0)

    two = np.zeros((40, 80), bool)
    two[5:8, 5:75] = True
    two[20:27, 5:75] = True
    s = imaging.stroke_width_stats(two, imaging.thin(two))
    assert abs(s.mean_width - 5) <= 1


def test_empty_skeleton_raises():
    m = np.zeros((5, 5), bool)
    with pytest.raises(EmptyInkError):
        imaging.stroke_width_stats(m, imaging.Skeleton.from_mask(m))


# -- contours --------------------------------------------------------------


def test_square_and_ring_contours():
    sq = np.zeros((20, 20), bool)
    sq[4:16, 4:16] = True
    kinds = [c.kind for c in imaging.trace_contours(sq)]
    assert kinds == ["exterior"]
    ring = sq.copy()
    ring[8:12, 8:12] = False
    kinds = sorted(c.kind for c in imaging.trace_contours(ring))
    assert kinds == ["exterior", "interior"]


def test_contours_are_closed_8_chains(glyphs):
    for g in glyphs[:20]:
        for c in imaging.trace_contours(g):
            pts = c.points
            if len(pts) > 1:
                step = np.abs(np.diff(np.vstack([pts, pts[:1]]), axis=0)).max(axis=1)
                assert step.max() <= 1


def test_contours_agree_with_quad_count_euler(glyphs):
    for g in glyphs:
        cs = imaging.trace_contours(g)
        ext = sum(c.kind == "exterior" for c in cs)
        assert ext - (len(cs) - ext) == euler_quads(g) == imaging.euler_number(g)


def test_two_hole_glyph():
    g = np.zeros((30, 50), bool)
    g[5:25, 5:45] = True
    g[10:20, 10:20] = False
    g[10:20, 28:38] = False
    cs = imaging.trace_contours(g)
    assert sum(c.kind == "interior" for c in cs) == 1 - euler_quads(g) == 2


# -- keypoints and graph ---------------------------------------------------


def _kinds(kps):
    return sorted(k.kind for k in kps)


def test_line_keypoints_and_graph():
    m = np.zeros((10, 30), bool)
    m[5, 3:27] = True
    sk = imaging.Skeleton.from_mask(m)
    kps = imaging.detect_keypoints(sk)
    assert _kinds(kps) == ["end", "end"]
    assert len(imaging.build_stroke_graph(sk, kps).edges) == 1


def test_plus_sign():
    m = np.zeros((31, 31), bool)
    m[15, 3:28] = True
    m[3:28, 15] = True
    sk = imaging.thin(m)
    kps = imaging.detect_keypoints(sk)
    assert _kinds(kps) == ["branch"] + ["end"] * 4
    g = imaging.build_stroke_graph(sk, kps)
    branch = next(i for i, k in enumerate(kps) if k.kind == "branch")
    assert len(g.edges) == 4 and all(branch in (e.u, e.v) for e in g.edges)


def test_corner_gives_a_curved_point():
    m = np.zeros((40, 40), bool)
    m[5:30, 5] = True
    m[29, 5:30] = True
    kps = imaging.detect_keypoints(imaging.thin(m))
    kinds = _kinds(kps)
    assert kinds.count("end") == 2 and kinds.count("curved") >= 1
    corner = [k for k in kps if k.kind == "curved"]
    assert min(abs(k.position[0] - 29) + abs(k.position[1] - 5) for k in corner) <= 3


def triangle_with_tails():
    img = np.zeros((80, 80), np.uint8)
    a, b, c = (20, 55), (60, 55), (40, 20)
    for p, q in [(a, b), (b, c), (c, a), (a, (5, 70)), (b, (75, 70)), (c, (40, 3))]:
        cv2.line(img, p, q, 1, 3)
    return img.astype(bool)


def test_six_edge_glyph():
    m = triangle_with_tails()
    sk = imaging.thin(m)
    pr = imaging.prune_spurs(sk, imaging.stroke_width_stats(m, sk))
    g = imaging.skeleton_graph(pr)
    assert len(g.edges) == 6
    assert _kinds(g.nodes) == ["branch"] * 3 + ["end"] * 3


def test_graph_covers_skeleton(glyphs):
    for g in glyphs:
        sk = imaging.thin(g)
        kps = imaging.detect_keypoints(sk)
        graph = imaging.build_stroke_graph(sk, kps)
        node_px = {p for k in kps for p in k.pixels}
        edge_px = [tuple(p) for e in graph.edges for p in e.path]
        assert len(edge_px) + len(node_px) == sk.stroke_length_px
        assert not node_px & set(edge_px)
        assert all(sk.image[p] for p in node_px)


def test_keypoints_cover_ends_and_branches(glyphs):
    for g in glyphs:
        sk = imaging.thin(g)
        owned = {p for k in imaging.detect_keypoints(sk) for p in k.pixels}
        for r, c in np.argwhere(sk.image):
            n = neighbours(sk.image, r, c)
            if n == 1 or n >= 3:
                assert (r, c) in owned


@given(st.integers(0, 2 ** 31 - 1))
def test_thin_never_adds_ink(seed):
    g = glyph_set(1, seed=seed, size=40)[0]
    sk = imaging.thin(g).image
    assert not (sk & ~g).any()
