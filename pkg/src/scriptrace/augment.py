"""Stroke-dropping augmentation, half-page expansion and the 2:1:1 split."""

from collections import defaultdict, deque
from dataclasses import dataclass, field
import math

import numpy as np
from scipy import ndimage as ndi

from . import imaging
from .exceptions import IncompleteSetError, TooShortError
from .page import PageAnalysis
from .segmentation import line_bands

N_VARIANTS = 10
SAMPLES_PER_PAGE = 2 + 2 * N_VARIANTS


@dataclass(frozen=True)
class AugmentConfig:
    alpha_d: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 0.1 <= self.alpha_d <= 1.0:
            raise ValueError(f"alpha_d must lie in [0.1, 1], got {self.alpha_d}")


@dataclass
class DropResult:
    """Outcome of one augmentation run.

    ``warning`` is set when nothing could be dropped.  ``available`` counts
    the edges that were still droppable when the run stopped, so
    ``len(removed) == min(target, len(removed) + available)``.
    """

    image: np.ndarray
    removed: list
    target: int
    available: int
    components_before: int
    components_after: int
    warning: bool = False


@dataclass
class ExpandedSample:
    sample_id: str
    parent_page_id: str
    half: str  # "top" | "bottom" | "full"
    variant_index: int
    image: np.ndarray = field(repr=False)
    removed_edges: int = 0
    warning: bool = False


def _reachable(adj, start, goal, skip):
    seen = {start}
    queue = deque([start])
    while queue:
        n = queue.popleft()
        if n == goal:
            return True
        for eid, m in adj[n]:
            if eid != skip and m not in seen:
                seen.add(m)
                queue.append(m)
    return False


def droppable_edges(graph, exclude=()):
    """Ids of edges whose removal keeps the graph's component count.

    An edge is droppable when it carries skeleton pixels and its end nodes
    stay connected without it (a self-loop always qualifies).  Edges with
    an empty path join touching keypoints and hold no ink of their own, so
    they are never offered.
    """
    adj = defaultdict(list)
    for e in graph.edges:
        adj[e.u].append((e.id, e.v))
        adj[e.v].append((e.id, e.u))
    out = set()
    for e in graph.edges:
        if e.id in exclude or e.length == 0:
            continue
        if e.u == e.v or _reachable(adj, e.u, e.v, e.id):
            out.add(e.id)
    return out


def _skeleton_of(graph, edges):
    sk = np.zeros(graph.shape, dtype=bool)
    for kp in graph.nodes:
        for p in kp.pixels:
            sk[p] = True
    for e in edges:
        if e.length:
            sk[e.path[:, 0], e.path[:, 1]] = True
    return sk


def _erase_region(ink, skeleton, path, radius):
    """Ink pixels closer to ``path`` than to the rest of the skeleton and
    within ``radius + 1`` of it."""
    own = np.zeros_like(skeleton)
    own[path[:, 0], path[:, 1]] = True
    _, (ri, ci) = ndi.distance_transform_edt(~(skeleton | own), return_indices=True)
    cell = own[ri, ci]
    near = ndi.distance_transform_edt(~own) <= radius + 1
    return ink & cell & near


def drop_strokes(image, graph, n_d, cfg=AugmentConfig(), stroke_stats=None, threshold=None):
    """Erase ``ceil(alpha_d * n_d)`` randomly chosen droppable strokes.

    The droppable set is recomputed after every removal.  A removal that
    would change the ink component count of the raster is undone and that
    edge is not offered again.

    Parameters
    ----------
    image : ndarray
        Grayscale page (ink dark) or boolean ink mask.
    graph : StrokeGraph
        Stroke graph of ``image``.
    n_d : int
        Character count of the page.
    stroke_stats : StrokeStats, optional
        Erasure radius is ``floor(mean_width / 2)``; estimated if omitted.
    threshold : int, optional
        Ink threshold for grayscale input; Otsu if omitted.
    """
    if n_d < 1:
        raise ValueError("n_d must be at least 1")
    arr = np.asarray(image)
    is_mask = arr.dtype == bool
    if is_mask:
        ink = arr.copy()
        out = ink
    else:
        out = imaging.check_gray_image(arr).copy()
        t = imaging.otsu_threshold(out) if threshold is None else threshold
        ink = out < t
    if stroke_stats is None:
        sk = imaging.thin(ink)
        stroke_stats = (
            imaging.stroke_width_stats(ink, sk) if sk.image.any() else imaging.StrokeStats(1.0, 0.0)
        )
    radius = int(math.floor(stroke_stats.mean_width / 2))
    target = math.ceil(cfg.alpha_d * n_d - 1e-9)
    rng = np.random.default_rng(cfg.seed)
    before = imaging.component_count(ink)

    edges = {e.id: e for e in graph.edges}
    blocked = set()
    removed = []
    sub = imaging.StrokeGraph(graph.nodes, list(graph.edges), graph.component_count, graph.shape)
    while len(removed) < target:
        cand = sorted(droppable_edges(sub, blocked))
        if not cand:
            break
        eid = cand[int(rng.integers(len(cand)))]
        rest = [e for e in sub.edges if e.id != eid]
        region = _erase_region(ink, _skeleton_of(sub, rest), edges[eid].path, radius)
        trial = ink & ~region
        if imaging.component_count(trial) != before:
            blocked.add(eid)
            continue
        ink = trial
        sub.edges = rest
        removed.append(eid)
        if not is_mask:
            halo = ndi.binary_dilation(region, structure=imaging.EIGHT) & ~ink
            out[halo] = 255
    available = len(droppable_edges(sub, blocked))
    return DropResult(
        ink if is_mask else out,
        removed,
        target,
        available,
        before,
        imaging.component_count(ink),
        warning=not removed,
    )


def split_row(mask):
    """Row splitting a page at the inter-line valley nearest mid-height.

    Raises
    ------
    TooShortError
        If the page holds fewer than two text lines.
    """
    layout = PageAnalysis(mask).layout
    if len(layout.lines) < 2:
        raise TooShortError(f"page has {len(layout.lines)} text line(s); need at least 2")
    heights = [ln.height for ln in layout.lines]
    bands = line_bands(layout.kept, max(1, int(round(np.median(heights) / 4))))
    if len(bands) < 2:
        tops = sorted(ln.bbox for ln in layout.lines)
        bands = [(b[0], b[2]) for b in tops]
    mid = mask.shape[0] / 2
    cuts = [(a[1] + b[0]) // 2 for a, b in zip(bands[:-1], bands[1:])]
    return min(cuts, key=lambda c: (abs(c - mid), c))


def expand_page(image, page_id="page", cfg=AugmentConfig(), n_variants=N_VARIANTS):
    """Two half pages plus ``n_variants`` stroke-dropped copies of each.

    Sample ids are ``{page_id}-{half}-{k:02d}``, variant 0 being the plain
    half.  The seed of every variant is derived from ``cfg.seed``, the half
    and the variant index.
    """
    page = PageAnalysis(image)
    cut = split_row(page.mask)
    base = page.mask if np.asarray(image).dtype == bool else page.gray
    out = []
    for h, (name, half) in enumerate((("top", base[:cut]), ("bottom", base[cut:]))):
        half = half.copy()
        out.append(ExpandedSample(f"{page_id}-{name}-00", page_id, name, 0, half))
        hp = PageAnalysis(half)
        n_d = max(1, hp.layout.character_count)
        graph = hp.graph
        for k in range(1, n_variants + 1):
            seed = int(np.random.SeedSequence([cfg.seed, h, k]).generate_state(1)[0])
            res = drop_strokes(
                half,
                graph,
                n_d,
                AugmentConfig(cfg.alpha_d, seed),
                stroke_stats=hp.stroke_stats,
                threshold=None if half.dtype == bool else hp.threshold,
            )
            out.append(
                ExpandedSample(
                    f"{page_id}-{name}-{k:02d}", page_id, name, k, res.image,
                    len(res.removed), res.warning,
                )
            )
    return out


def split211(writer_pages):
    """Train / validation / test split of one writer's two expanded pages.

    All samples of the first page train; the second page's top half
    validates and its bottom half tests.
    """
    if len(writer_pages) != 2 or any(len(p) != SAMPLES_PER_PAGE for p in writer_pages):
        sizes = [len(p) for p in writer_pages]
        raise IncompleteSetError(
            f"need two pages of {SAMPLES_PER_PAGE} samples each, got sizes {sizes}"
        )
    first, second = writer_pages
    train = list(first)
    val = [s for s in second if s.half == "top"]
    test = [s for s in second if s.half == "bottom"]
    if len(val) != SAMPLES_PER_PAGE // 2 or len(test) != SAMPLES_PER_PAGE // 2:
        raise IncompleteSetError("second page must hold 11 top and 11 bottom samples")
    return train, val, test
