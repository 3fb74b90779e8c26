"""Lazily computed per-page artifacts shared by features, patches and
augmentation."""

from functools import cached_property

import numpy as np

from . import imaging
from .segmentation import MIN_AREA_RATIO, segment_page
from .validation import check_binary_image, check_gray_image


def to_mask(img):
    """Ink mask of a grayscale (Otsu) or already-binary image."""
    arr = np.asarray(img)
    if arr.dtype == bool:
        return arr
    return imaging.binarize(arr)[0]


class PageAnalysis:
    """Bundle of a page's preprocessing results, each computed on first use.

    Parameters
    ----------
    image : ndarray
        Grayscale ``uint8`` page or boolean ink mask.
    min_area_ratio : float
        Small-component cut used by segmentation.
    """

    def __init__(self, image, min_area_ratio=MIN_AREA_RATIO):
        arr = np.asarray(image)
        if arr.dtype == bool:
            self.mask = arr
            self.gray = np.where(arr, 0, 255).astype(np.uint8)
            self.threshold = 128
        else:
            self.gray = check_gray_image(arr)
            self.mask, self.threshold = imaging.binarize(self.gray)
        self.mask = check_binary_image(self.mask)
        self.min_area_ratio = min_area_ratio

    @property
    def shape(self):
        return self.mask.shape

    @cached_property
    def layout(self):
        return segment_page(self.mask, self.min_area_ratio)

    @cached_property
    def skeleton(self):
        return imaging.thin(self.mask)

    @cached_property
    def stroke_stats(self):
        if not self.skeleton.image.any():
            return imaging.StrokeStats(1.0, 0.0)
        return imaging.stroke_width_stats(self.mask, self.skeleton)

    @cached_property
    def pruned(self):
        return imaging.prune_spurs(self.skeleton, self.stroke_stats)

    @cached_property
    def keypoints(self):
        return imaging.detect_keypoints(self.pruned)

    @cached_property
    def graph(self):
        return imaging.build_stroke_graph(self.pruned, self.keypoints)

    @cached_property
    def contours(self):
        return imaging.trace_contours(self.mask)

    @cached_property
    def epsilon(self):
        from .features import compute_epsilon

        return compute_epsilon(self.stroke_stats)
