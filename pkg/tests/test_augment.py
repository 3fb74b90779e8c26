import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scriptrace import imaging
from scriptrace.augment import (
    N_VARIANTS, SAMPLES_PER_PAGE, AugmentConfig, _skeleton_of, drop_strokes, droppable_edges,
    expand_page, split211,
)
from scriptrace.exceptions import IncompleteSetError, TooShortError
from scriptrace.imaging import Edge, Keypoint, StrokeGraph
from scriptrace.page import PageAnalysis

from test_imaging import triangle_with_tails


def hand_graph(edge_list):
    n = 1 + max(max(u, v) for _, u, v in edge_list)
    nodes = [Keypoint((0, 3 * i), "branch") for i in range(n)]
    edges = [Edge(eid, u, v, np.array([[1, 3 * eid]])) for eid, u, v in edge_list]
    return StrokeGraph(nodes, edges, 1, (4, 3 * max(n, len(edges) + 1)))


def six_edge_graph():
    # a three-edge loop (2, 3, 4) with three tails (1, 5, 6)
    return hand_graph([(1, 0, 1), (2, 1, 2), (3, 2, 3), (4, 3, 1), (5, 2, 4), (6, 3, 5)])


def test_six_edge_droppable_set():
    assert droppable_edges(six_edge_graph()) == {2, 3, 4}


def test_single_edge_is_not_droppable():
    assert droppable_edges(hand_graph([(0, 0, 1)])) == set()


def test_cycle_edges_are_droppable():
    assert droppable_edges(hand_graph([(0, 0, 1), (1, 1, 2), (2, 2, 0)])) == {0, 1, 2}


def test_empty_path_edges_are_not_offered():
    g = hand_graph([(0, 0, 1), (1, 1, 0)])
    g.edges[1] = Edge(1, 1, 0, np.zeros((0, 2), int))
    assert droppable_edges(g) == {0}


def _skeleton_components_without(graph, eid):
    rest = [e for e in graph.edges if e.id != eid]
    return imaging.component_count(_skeleton_of(graph, rest))


def test_raster_droppable_matches_brute_force():
    m = triangle_with_tails()
    g = PageAnalysis(m).graph
    base = imaging.component_count(_skeleton_of(g, g.edges))
    brute = {e.id for e in g.edges if e.length and _skeleton_components_without(g, e.id) == base}
    assert droppable_edges(g) == brute
    assert len(brute) == 3


def test_drop_target_uses_ceiling(page):
    pa = PageAnalysis(page)
    res = drop_strokes(page, pa.graph, 37, AugmentConfig(0.1, 1), pa.stroke_stats, pa.threshold)
    assert res.target == math.ceil(0.1 * 37) == 4
    assert len(res.removed) == min(4, len(res.removed) + res.available)


def test_drop_is_deterministic(page):
    pa = PageAnalysis(page)
    a = drop_strokes(page, pa.graph, 20, AugmentConfig(0.3, 9))
    b = drop_strokes(page, pa.graph, 20, AugmentConfig(0.3, 9))
    assert np.array_equal(a.image, b.image) and a.removed == b.removed


def test_nothing_droppable_sets_warning():
    m = np.zeros((20, 40), bool)
    m[8:11, 5:35] = True
    pa = PageAnalysis(m)
    res = drop_strokes(m, pa.graph, 5)
    assert res.warning and res.removed == [] and np.array_equal(res.image, m)


@pytest.mark.parametrize("alpha", [0.0, 1.5])
def test_alpha_range(alpha):
    with pytest.raises(ValueError):
        AugmentConfig(alpha)


@settings(max_examples=25)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.1, 1.0))
def test_components_never_increase(seed, alpha):
    m = triangle_with_tails()
    pa = PageAnalysis(m)
    res = drop_strokes(m, pa.graph, 6, AugmentConfig(alpha, seed), pa.stroke_stats)
    assert res.components_after <= res.components_before
    assert imaging.component_count(res.image) == res.components_after
    assert len(res.removed) == min(res.target, len(res.removed) + res.available)


# -- expansion and split ---------------------------------------------------


@pytest.fixture(scope="module")
def expanded(page_pair):
    return [expand_page(img, f"pg{i}", AugmentConfig(0.1, i)) for i, img in enumerate(page_pair)]


def test_expansion_counts(expanded):
    for samples in expanded:
        assert len(samples) == SAMPLES_PER_PAGE == 2 + 2 * N_VARIANTS
        assert len({s.sample_id for s in samples}) == SAMPLES_PER_PAGE
        assert sorted({s.half for s in samples}) == ["bottom", "top"]


def test_variant_zero_is_the_plain_half(page_pair, expanded):
    img = page_pair[0]
    top, bottom = [s for s in expanded[0] if s.variant_index == 0]
    assert np.array_equal(np.vstack([top.image, bottom.image]), img)


def test_variants_differ_from_their_half(expanded):
    for samples in expanded:
        plain = {s.half: s.image for s in samples if s.variant_index == 0}
        for s in samples:
            if s.variant_index:
                assert s.removed_edges >= 1
                assert (s.image != plain[s.half]).any()


def test_split_211(expanded):
    train, val, test = split211(expanded)
    assert (len(train), len(val), len(test)) == (22, 11, 11)
    ids = [{s.sample_id for s in part} for part in (train, val, test)]
    assert not (ids[0] & ids[1] or ids[0] & ids[2] or ids[1] & ids[2])
    assert {s.parent_page_id for s in train} == {"pg0"}
    t2, _, _ = split211(expanded[::-1])
    assert {s.parent_page_id for s in t2} == {"pg1"}


def test_split_needs_two_pages(expanded):
    with pytest.raises(IncompleteSetError):
        split211(expanded[:1])


def test_single_line_page_is_too_short():
    m = np.full((60, 200), 255, np.uint8)
    m[20:35, 10:190:20] = 0
    with pytest.raises(TooShortError):
        expand_page(m)
