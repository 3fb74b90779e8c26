import sys

import cv2
import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("repo", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("repo")


def random_glyph(rng, size=64, max_strokes=3):
    """Boolean mask with a few thick random Bezier strokes."""
    img = np.zeros((size, size), np.uint8)
    t = np.linspace(0, 1, 40)[:, None]
    for _ in range(int(rng.integers(1, max_strokes + 1))):
        p = rng.uniform(8, size - 8, (4, 2))
        pts = ((1 - t) ** 3 * p[0] + 3 * (1 - t) ** 2 * t * p[1]
               + 3 * (1 - t) * t ** 2 * p[2] + t ** 3 * p[3])
        cv2.polylines(img, [np.round(pts).astype(np.int32)], False, 1, int(rng.integers(1, 6)))
    return img.astype(bool)


def glyph_set(n, seed=0, size=64):
    rng = np.random.default_rng(seed)
    return [random_glyph(rng, size) for _ in range(n)]


@pytest.fixture(scope="session")
def glyphs():
    return glyph_set(50, seed=7)


@pytest.fixture(scope="session")
def page():
    from scriptrace.synth import render_page

    return render_page(3, "medium", 0)[0]


@pytest.fixture(scope="session")
def page_pair():
    from scriptrace.synth import render_page

    return [render_page(3, "slow", p)[0] for p in (0, 1)]


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
