import numpy as np
import pytest

from scriptrace.exceptions import NoInkError
from scriptrace.imaging import Keypoint
from scriptrace.page import PageAnalysis
from scriptrace.patches import (
    PatchConfig, extract_patch_allo, extract_patch_char, patch_grid, sample_patches,
    save_patch_grid,
)
from scriptrace.segmentation import CharacterBox


def box_at(r, c):
    return CharacterBox((r - 3, c - 3, r + 4, c + 4), (float(r), float(c)), (1,))


@pytest.mark.parametrize("n_char,n_allo,pad", [(116, 58, 29), (224, 112, 56), (7, 3, 2)])
def test_config_geometry(n_char, n_allo, pad):
    cfg = PatchConfig(n_char)
    assert (cfg.n_allo, cfg.pad_width, cfg.pad_to) == (n_allo, pad, n_char)


def test_char_patch_centre_and_size():
    m = np.zeros((300, 300), bool)
    m[148:153, 148:153] = True
    p = extract_patch_char(m, box_at(150, 150))
    assert p.pixels.shape == (116, 116)
    assert p.center == (150, 150)
    assert p.pixels[58, 58]


def test_corner_patch_is_zero_filled():
    m = np.ones((50, 50), bool)
    p = extract_patch_char(m, box_at(0, 0))
    assert p.pixels.shape == (116, 116)
    expected = np.zeros((116, 116), bool)
    expected[58:108, 58:108] = True
    assert np.array_equal(p.pixels, expected)


def test_identical_characters_give_identical_patches():
    m = np.zeros((300, 400), bool)
    for c in (100, 300):
        m[145:155, c - 2:c + 3] = True
    a = extract_patch_char(m, box_at(150, 100))
    b = extract_patch_char(m, box_at(150, 300))
    assert np.array_equal(a.pixels, b.pixels)


@pytest.mark.parametrize("n_char", [116, 224, 31])
def test_allo_border_is_zero(n_char):
    m = np.ones((400, 400), bool)
    cfg = PatchConfig(n_char)
    p = extract_patch_allo(m, Keypoint((200, 200), "end"), cfg)
    w = cfg.pad_width
    assert p.pixels.shape == (n_char, n_char)
    inner = np.zeros_like(p.pixels)
    inner[w:w + cfg.n_allo, w:w + cfg.n_allo] = True
    assert not p.pixels[~inner].any() and p.pixels[inner].all()


def test_blank_neighbourhood_gives_zero_patch():
    m = np.zeros((100, 100), bool)
    assert not extract_patch_allo(m, Keypoint((50, 50), "end")).pixels.any()


def test_sampling_without_replacement(page):
    pa = PageAnalysis(page)
    n = len(pa.layout.characters)
    got = sample_patches(pa, n, seed=3)
    assert len(got) == n
    assert len({p.center for p in got}) == n


def test_sampling_with_replacement(page):
    pa = PageAnalysis(page)
    got = sample_patches(pa, 400, seed=3)
    assert len(got) == 400
    assert len({p.center for p in got}) <= len(pa.layout.characters)


@pytest.mark.parametrize("mode", ["char", "allo", "arbitrary"])
def test_sampling_is_deterministic_and_ordered(page, mode):
    pa = PageAnalysis(page)
    a = sample_patches(pa, 12, seed=5, mode=mode)
    b = sample_patches(pa, 12, seed=5, mode=mode)
    assert [p.center for p in a] == [p.center for p in b]
    assert all(np.array_equal(x.pixels, y.pixels) for x, y in zip(a, b))
    assert [p.center for p in a] == sorted(p.center for p in a)
    assert all(p.pixels.shape == (116, 116) for p in a)


def test_extraction_leaves_page_untouched(page):
    pa = PageAnalysis(page)
    before = pa.mask.copy()
    sample_patches(pa, 20, seed=1, mode="allo")
    assert np.array_equal(pa.mask, before)


def test_no_candidates():
    with pytest.raises(NoInkError):
        sample_patches(np.full((50, 50), 255, np.uint8), 3)


def test_patch_grid(tmp_path, page):
    ps = sample_patches(PageAnalysis(page), 5, seed=0)
    grid = patch_grid(ps, columns=3)
    assert grid.dtype == np.uint8 and grid.shape[1] >= 3 * 116
    save_patch_grid(ps, tmp_path / "g.png", columns=3)
    assert (tmp_path / "g.png").stat().st_size > 0
