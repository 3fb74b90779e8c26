"""Projection-profile segmentation of a binary page into lines, words and
characters.

These are deliberately simple baselines: downstream code only needs
bounding boxes and centres of gravity.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage as ndi

from .imaging import label_components
from .validation import check_binary_image

MIN_AREA_RATIO = 0.1
CHAR_OVERLAP = 0.5
WORD_GAP_FACTOR = 1.5
WORD_GAP_HEIGHT_CAP = 0.6


def _union(boxes):
    boxes = np.asarray(boxes)
    return (
        int(boxes[:, 0].min()),
        int(boxes[:, 1].min()),
        int(boxes[:, 2].max()),
        int(boxes[:, 3].max()),
    )


@dataclass(frozen=True)
class TextLine:
    """``bbox`` is ``(row0, col0, row1, col1)`` with exclusive ends."""

    bbox: tuple
    component_ids: tuple
    skew: float

    @property
    def height(self):
        return self.bbox[2] - self.bbox[0]


@dataclass(frozen=True)
class CharacterBox:
    bbox: tuple
    center_of_gravity: tuple
    component_ids: tuple
    line_index: int = 0


@dataclass
class PageLayout:
    lines: list = field(default_factory=list)
    words: list = field(default_factory=list)
    characters: list = field(default_factory=list)
    labels: np.ndarray = None
    kept: np.ndarray = None

    def __iter__(self):
        return iter((self.lines, self.words, self.characters))

    @property
    def character_count(self):
        return len(self.characters)


def line_bands(mask, smooth):
    """Row intervals ``[r0, r1)`` where the smoothed projection is non-empty."""
    profile = mask.sum(axis=1).astype(float)
    if smooth > 1:
        profile = ndi.uniform_filter1d(profile, size=smooth, mode="constant")
    if profile.max(initial=0) <= 0:
        return []
    on = profile > 0.02 * profile.max()
    edges = np.diff(np.concatenate(([0], on.astype(np.int8), [0])))
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1)
    return list(zip(starts.tolist(), stops.tolist()))


def segment_page(img, min_area_ratio=MIN_AREA_RATIO):
    """Segment a binary page.

    Components smaller than ``min_area_ratio`` times the median component
    area are discarded as dots and noise.  Lines come from valleys of the
    horizontal projection, characters are components whose column spans
    overlap by at least half of the narrower one, and words break where the
    gap between characters exceeds ``1.5`` times the median gap in the line
    (capped at ``0.6`` line heights, so evenly spaced isolated glyphs still
    split).
    """
    mask = check_binary_image(img)
    labels, count = label_components(mask)
    layout = PageLayout(labels=labels, kept=np.zeros_like(mask))
    if count == 0:
        return layout
    areas = np.bincount(labels.ravel(), minlength=count + 1)
    slices = ndi.find_objects(labels)
    boxes = np.array(
        [(s[0].start, s[1].start, s[0].stop, s[1].stop) for s in slices], dtype=int
    )
    median_area = float(np.median(areas[1:]))
    keep = [i + 1 for i in range(count) if areas[i + 1] >= min_area_ratio * median_area]
    if not keep:
        return layout
    keep_arr = np.zeros(count + 1, dtype=bool)
    keep_arr[keep] = True
    kept = keep_arr[labels]
    layout.kept = kept
    heights = boxes[np.array(keep) - 1, 2] - boxes[np.array(keep) - 1, 0]
    smooth = max(1, int(round(np.median(heights) / 4)))
    bands = line_bands(kept, smooth)
    if not bands:
        bands = [(0, mask.shape[0])]

    centroids = ndi.center_of_mass(mask, labels, keep)
    centroid_of = dict(zip(keep, centroids))
    members = [[] for _ in bands]
    for lab in keep:
        r0, _, r1, _ = boxes[lab - 1]
        overlaps = [max(0, min(r1, b1) - max(r0, b0)) for b0, b1 in bands]
        best = int(np.argmax(overlaps))
        if overlaps[best] == 0:
            mid = (r0 + r1) / 2
            best = int(np.argmin([abs(mid - (b0 + b1) / 2) for b0, b1 in bands]))
        members[best].append(lab)

    for comps in members:
        if not comps:
            continue
        comps = sorted(comps, key=lambda k: (boxes[k - 1][1], k))
        line_box = _union([boxes[k - 1] for k in comps])
        if len(comps) > 1:
            rows = np.array([centroid_of[k][0] for k in comps])
            cols = np.array([centroid_of[k][1] for k in comps])
            skew = float(np.polyfit(cols, rows, 1)[0]) if np.ptp(cols) > 0 else 0.0
        else:
            skew = 0.0
        line_index = len(layout.lines)
        layout.lines.append(TextLine(line_box, tuple(comps), skew))

        groups = []
        for k in comps:
            b = boxes[k - 1]
            if groups:
                g = groups[-1]
                lo, hi = max(g["c0"], b[1]), min(g["c1"], b[3])
                narrow = min(g["c1"] - g["c0"], b[3] - b[1])
                if narrow > 0 and hi - lo >= CHAR_OVERLAP * narrow:
                    g["ids"].append(k)
                    g["c0"], g["c1"] = min(g["c0"], b[1]), max(g["c1"], b[3])
                    continue
            groups.append({"ids": [k], "c0": b[1], "c1": b[3]})
        chars = []
        for g in groups:
            ids = tuple(g["ids"])
            box = _union([boxes[k - 1] for k in ids])
            sub = np.isin(labels[box[0]:box[2], box[1]:box[3]], ids)
            rr, cc = np.nonzero(sub)
            cog = (float(rr.mean() + box[0]), float(cc.mean() + box[1]))
            chars.append(CharacterBox(box, cog, ids, line_index))
        layout.characters.extend(chars)

        height = max(1, line_box[2] - line_box[0])
        right = [chars[0].bbox[3]]
        gaps = []
        for ch in chars[1:]:
            gaps.append(ch.bbox[1] - right[-1])
            right.append(max(right[-1], ch.bbox[3]))
        if gaps:
            thresh = min(
                WORD_GAP_FACTOR * max(float(np.median(gaps)), 1.0),
                WORD_GAP_HEIGHT_CAP * height,
            )
        word = [chars[0]]
        for ch, gap in zip(chars[1:], gaps):
            if gap > thresh:
                layout.words.append(_union([c.bbox for c in word]))
                word = []
            word.append(ch)
        layout.words.append(_union([c.bbox for c in word]))
    return layout
