"""Fixed-size text patches cut around characters or stroke keypoints."""

from dataclasses import dataclass

import numpy as np

from .exceptions import NoInkError
from .page import PageAnalysis

PATCH_MODES = ("char", "allo", "arbitrary")


@dataclass(frozen=True)
class PatchConfig:
    """Window geometry.

    ``n_allo`` is half of ``n_char`` (rounded down) and allograph windows
    are zero-padded back to ``n_char`` on every side.
    """

    n_char: int = 116

    def __post_init__(self):
        if self.n_char < 2:
            raise ValueError("n_char must be at least 2")

    @property
    def n_allo(self):
        return self.n_char // 2

    @property
    def pad_to(self):
        return self.n_char

    @property
    def pad_width(self):
        return (self.n_char - self.n_allo) // 2


@dataclass(frozen=True)
class Patch:
    source_sample_id: str
    center: tuple
    kind: str
    pixels: np.ndarray


def _window(mask, center, size):
    """``size x size`` crop whose centre pixel is ``center``; outside is 0."""
    out = np.zeros((size, size), dtype=mask.dtype)
    r0 = int(round(center[0])) - size // 2
    c0 = int(round(center[1])) - size // 2
    h, w = mask.shape
    rs, cs = max(r0, 0), max(c0, 0)
    re, ce = min(r0 + size, h), min(c0 + size, w)
    if rs < re and cs < ce:
        out[rs - r0:re - r0, cs - c0:ce - c0] = mask[rs:re, cs:ce]
    return out


def extract_patch_char(mask, box, cfg=PatchConfig(), sample_id="page"):
    """Window of side ``n_char`` centred at a character's centre of gravity."""
    center = tuple(int(round(v)) for v in box.center_of_gravity)
    return Patch(sample_id, center, "char", _window(np.asarray(mask), center, cfg.n_char))


def _allo_at(mask, center, cfg, sample_id):
    canvas = np.zeros((cfg.pad_to, cfg.pad_to), dtype=mask.dtype)
    p = cfg.pad_width
    canvas[p:p + cfg.n_allo, p:p + cfg.n_allo] = _window(mask, center, cfg.n_allo)
    return Patch(sample_id, tuple(int(v) for v in center), "allo", canvas)


def extract_patch_allo(mask, kp, cfg=PatchConfig(), sample_id="page"):
    """Half-size window at a keypoint, centred in a zero canvas of ``n_char``."""
    return _allo_at(np.asarray(mask), kp.position, cfg, sample_id)


def patch_candidates(page, mode, rng=None):
    """Candidate centres ``(row, col)`` for the given sampling mode."""
    if mode == "char":
        return [tuple(int(round(v)) for v in ch.center_of_gravity) for ch in page.layout.characters]
    if mode == "allo":
        return [tuple(kp.position) for kp in page.keypoints]
    if mode == "arbitrary":
        return [tuple(p) for p in np.argwhere(page.layout.kept)]
    raise ValueError(f"unknown patch mode {mode!r}; use one of {PATCH_MODES}")


def sample_patches(page, n_p, seed=0, mode="char", cfg=PatchConfig(), sample_id="page"):
    """Draw ``n_p`` patches from a page.

    Sampling is without replacement when the page offers at least ``n_p``
    candidates and with replacement otherwise.  The result is ordered by
    patch centre so downstream vectors do not depend on draw order.

    Raises
    ------
    NoInkError
        If the page has no candidate centre.
    """
    if n_p < 1:
        raise ValueError("n_p must be at least 1")
    if not isinstance(page, PageAnalysis):
        page = PageAnalysis(page)
    cands = patch_candidates(page, mode)
    if not cands:
        raise NoInkError(f"no {mode} patch candidates on sample {sample_id!r}")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(cands), size=n_p, replace=len(cands) < n_p)
    idx = sorted(idx.tolist(), key=lambda i: (cands[i], i))
    mask = page.mask
    out = []
    for i in idx:
        if mode == "allo":
            out.append(_allo_at(mask, cands[i], cfg, sample_id))
        else:
            p = Patch(sample_id, cands[i], mode, _window(mask, cands[i], cfg.n_char))
            out.append(p)
    return out


def patch_grid(patches, columns=8):
    """Tile patches into one ``uint8`` image (ink dark) for inspection."""
    if not patches:
        raise ValueError("no patches to tile")
    size = patches[0].pixels.shape[0]
    rows = -(-len(patches) // columns)
    grid = np.full((rows * (size + 1) + 1, columns * (size + 1) + 1), 128, np.uint8)
    for k, p in enumerate(patches):
        r, c = divmod(k, columns)
        tile = np.where(p.pixels, 0, 255).astype(np.uint8)
        grid[1 + r * (size + 1):1 + r * (size + 1) + size, 1 + c * (size + 1):1 + c * (size + 1) + size] = tile
    return grid


def save_patch_grid(patches, path, columns=8):
    from PIL import Image

    Image.fromarray(patch_grid(patches, columns)).save(path)
