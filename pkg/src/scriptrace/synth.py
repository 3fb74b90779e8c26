"""Synthetic handwriting pages for exercising the pipeline end to end.

Every writer owns a deformed copy of a shared alphabet of Bezier glyphs,
plus a personal slant, aspect, roundness, size and pen width.  Writing
styles (slow, medium, fast) move these traits away from the writer's
medium hand, each writer in its own random direction, and the amount of
movement scales with ``severity``.  At severity 0 the three styles render
identical pages.

All random draws for a page come from streams keyed by the writer and the
page index only, so style never changes *what* is drawn, only how much of
each draw is applied.
"""

from dataclasses import dataclass

import cv2
import numpy as np

STYLES = ("slow", "medium", "fast")
N_GLYPHS = 8
PAGE_SHAPE = (300, 480)
GLYPH_JITTER = 0.3
WRITER_SLANT = 0.6
WRITER_ASPECT = (0.6, 1.5)
WRITER_SIZE = (26, 34)
WRITER_PEN = (2, 5)


@dataclass(frozen=True)
class StyleEffect:
    """How far a style moves a writer's traits at severity 1.

    Shifts are ``mean + spread * z`` with ``z`` a per-writer standard
    normal draw, so writers drift apart differently.
    """

    slant: tuple = (0.0, 0.0)
    aspect: tuple = (0.0, 0.0)
    roundness: tuple = (0.0, 0.0)
    jitter: float = 0.0
    speed: float = 0.0
    spacing: float = 0.0


STYLE_EFFECTS = {
    # perturbation grows slow < medium < fast; slow and medium stay close
    "slow": StyleEffect((0.0, 0.03), (0.0, 0.02), (0.0, 0.05), 0.0, -0.4, 0.1),
    "medium": StyleEffect((0.0, 0.05), (0.0, 0.03), (0.0, 0.08), 0.01),
    "fast": StyleEffect((0.25, 0.35), (0.2, 0.25), (0.0, 0.6), 0.02, 0.6, -0.2),
}


@dataclass(frozen=True)
class SynthConfig:
    writer_count: int = 25
    pages_per_style: int = 2
    severity: float = 0.7
    seed: int = 0
    shape: tuple = PAGE_SHAPE
    lines: int = 4

    def __post_init__(self):
        if self.writer_count < 2:
            raise ValueError("writer_count must be at least 2")
        if self.pages_per_style < 1:
            raise ValueError("pages_per_style must be at least 1")
        if self.severity < 0:
            raise ValueError("severity must be non-negative")


def _stream(*keys):
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))


def _bezier(ctrl, n=24):
    t = np.linspace(0, 1, n)[:, None]
    p0, p1, p2, p3 = ctrl
    return (1 - t) ** 3 * p0 + 3 * (1 - t) ** 2 * t * p1 + 3 * (1 - t) * t ** 2 * p2 + t ** 3 * p3


def base_alphabet(seed=0):
    """Glyphs as lists of cubic Bezier control polygons in the unit box."""
    rng = _stream(seed, 9001)
    glyphs = []
    for _ in range(N_GLYPHS):
        first = rng.uniform(0.0, 1.0, (4, 2))
        first[[0, 3], 1] = rng.uniform(0.1, 0.9, 2)
        if rng.random() < 0.35:
            first[3] = first[0] + rng.normal(0, 0.03, 2)  # near-closed loop
        strokes = [first]
        if rng.random() < 0.6:
            # second stroke leaving from a point of the first one
            t = rng.uniform(0.2, 0.8)
            start = _bezier(first, 11)[int(round(t * 10))]
            strokes.append(np.vstack([start, rng.uniform(0.0, 1.0, (3, 2))]))
        glyphs.append(strokes)
    return glyphs


@dataclass(frozen=True)
class WriterStyle:
    glyphs: tuple
    slant: float
    aspect: float
    roundness: float
    size: float
    pen: int
    spacing: float
    speed: float
    drift: dict  # style -> (slant z, aspect z, roundness z)


def writer_style(writer, seed=0):
    """Personal alphabet and handwriting parameters of one writer."""
    rng = _stream(seed, writer, 17)
    glyphs = tuple(
        tuple(s + rng.normal(0, GLYPH_JITTER, s.shape) for s in strokes)
        for strokes in base_alphabet(seed)
    )
    traits = dict(
        slant=float(rng.uniform(-WRITER_SLANT, WRITER_SLANT)),
        aspect=float(rng.uniform(*WRITER_ASPECT)),
        roundness=float(rng.uniform(-0.5, 0.8)),
        size=float(rng.uniform(*WRITER_SIZE)),
        pen=int(rng.integers(*WRITER_PEN)),
        spacing=float(rng.uniform(0.15, 0.45)),
        speed=float(rng.uniform(80, 160)),
    )
    drift = {s: tuple(rng.normal(0, 1, 3)) for s in STYLES}
    return WriterStyle(glyphs=glyphs, drift=drift, **traits)


def _shift(effect, z, severity):
    mean, spread = effect
    return severity * (mean + spread * z)


def render_page(writer, style, page_index, severity=0.7, seed=0, shape=PAGE_SHAPE, lines=4):
    """Render one page.

    Returns
    -------
    gray : ndarray of uint8
        Page image, ink dark on white.
    elapsed : float
        Simulated writing time in seconds.
    """
    if style not in STYLE_EFFECTS:
        raise ValueError(f"unknown style {style!r}; use one of {STYLES}")
    ws = writer_style(writer, seed)
    eff = STYLE_EFFECTS[style]
    zs, za, zr = ws.drift[style]
    slant = ws.slant + _shift(eff.slant, zs, severity)
    aspect = ws.aspect * (1 + _shift(eff.aspect, za, severity))
    roundness = ws.roundness + _shift(eff.roundness, zr, severity)
    jitter = severity * eff.jitter
    rng = _stream(seed, writer, 1000 + page_index)
    h, w = shape
    img = np.full(shape, 255, np.uint8)
    size = ws.size
    width = size * max(aspect, 0.3)
    gap = size * max(0.08, ws.spacing + severity * eff.spacing * 0.5)
    pitch = (h - 20) / lines
    length = 0.0
    for li in range(lines):
        base_row = 10 + pitch * li + (pitch - size) / 2
        col = 14.0 + rng.uniform(0, 8)
        while True:
            word_len = int(rng.integers(2, 6))
            word = rng.integers(0, N_GLYPHS, word_len)
            noise = rng.normal(0, 1, (word_len, 2, 4, 2))
            bounce = rng.normal(0, 1, word_len)
            if col + word_len * (width + gap) > w - 14:
                break
            for k, g in enumerate(word):
                dy = bounce[k] * size * 0.03
                for s, ctrl in enumerate(ws.glyphs[g]):
                    c = ctrl + jitter * noise[k, s % 2]
                    chord = (c[0] + c[3]) / 2
                    c = np.vstack([c[0], chord + (1 + roundness) * (c[1:3] - chord), c[3]])
                    pts = _bezier(np.clip(c, -0.15, 1.15))
                    y = base_row + dy + pts[:, 1] * size
                    x = col + pts[:, 0] * width + (base_row + size - y) * slant
                    xy = np.stack([x, y], 1)
                    poly = np.round(xy * 16).astype(np.int32)
                    cv2.polylines(img, [poly], False, 0, ws.pen, cv2.LINE_AA, shift=4)
                    length += float(np.hypot(*np.diff(xy, axis=0).T).sum())
                col += width + gap
            col += size * 0.9
    speed = ws.speed * (1 + severity * eff.speed) * (1 + 0.02 * rng.normal())
    return img, float(length / speed)


def corpus_pages(cfg):
    """Yield ``(writer_id, style, page_index, gray, elapsed)`` in a fixed order."""
    for writer in range(cfg.writer_count):
        for style in STYLES:
            for p in range(cfg.pages_per_style):
                gray, elapsed = render_page(
                    writer, style, p, cfg.severity, cfg.seed, cfg.shape, cfg.lines
                )
                yield f"w{writer:03d}", style, p, gray, elapsed
