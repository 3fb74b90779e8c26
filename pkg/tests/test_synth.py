import numpy as np
import pytest

from scriptrace.synth import STYLES, SynthConfig, corpus_pages, render_page, writer_style


def test_corpus_size_and_order():
    pages = list(corpus_pages(SynthConfig(writer_count=10, pages_per_style=2)))
    assert len(pages) == 60
    assert pages[0][:3] == ("w000", "slow", 0)
    assert pages[-1][:3] == ("w009", "fast", 1)
    assert all(p[4] > 0 for p in pages)


def test_same_seed_is_byte_identical():
    a, ta = render_page(4, "fast", 1, seed=5)
    b, tb = render_page(4, "fast", 1, seed=5)
    assert a.tobytes() == b.tobytes() and ta == tb
    c, _ = render_page(4, "fast", 1, seed=6)
    assert a.tobytes() != c.tobytes()


def test_severity_zero_renders_identical_styles():
    pages = [render_page(2, s, 0, severity=0.0)[0] for s in STYLES]
    assert all(np.array_equal(pages[0], p) for p in pages[1:])


def test_styles_differ_and_fast_is_quicker():
    (slow, ts), (fast, tf) = (render_page(2, s, 0) for s in ("slow", "fast"))
    assert not np.array_equal(slow, fast)
    assert tf < ts


def test_writers_differ():
    assert writer_style(0).slant != writer_style(1).slant
    assert not np.array_equal(render_page(0, "medium", 0)[0], render_page(1, "medium", 0)[0])


def test_page_has_ink():
    gray, _ = render_page(0, "slow", 0)
    assert gray.dtype == np.uint8 and gray.shape == (300, 480)
    assert 0.01 < (gray < 128).mean() < 0.3


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(writer_count=1)
    with pytest.raises(ValueError):
        SynthConfig(severity=-1)
    with pytest.raises(ValueError):
        render_page(0, "brisk", 0)
