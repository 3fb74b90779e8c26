"""Experimental protocol: corpora, the nine style setups, and Borda ranking.

A corpus holds one record per text sample plus a feature bank mapping each
sample id to a ``(n_rows, dim)`` array (one row per patch, or a single row
for page-level features).
"""

from dataclasses import asdict, dataclass, field, replace
import zlib

import numpy as np
from sklearn.base import clone

from . import augment, features, patches as patch_mod
from .exceptions import IncompleteSetError
from .identify import NearestCentroid, PageDecision, majority, mean_vector, top_n_hits
from .page import PageAnalysis
from .synth import STYLES, SynthConfig, corpus_pages
from .validation import check_feature_matrix

STYLE_KEYS = {"slow": "s", "medium": "m", "fast": "f"}
NINE = (
    "AE_ss", "AE_mm", "AE_ff",
    "AE_smv", "AE_sfv", "AE_mfv",
    "AE_smf/s", "AE_smf/m", "AE_smf/f",
)
CROSS = ("AE_smv", "AE_sfv", "AE_mfv")


@dataclass(frozen=True)
class SampleRecord:
    sample_id: str
    writer_id: str
    style: str
    split: str
    parent_page_id: str = None
    half: str = None
    variant_index: int = 0


@dataclass
class Corpus:
    records: list
    features: dict = field(default_factory=dict)

    @property
    def writers(self):
        return sorted({r.writer_id for r in self.records})

    def select(self, styles, split):
        styles = (styles,) if isinstance(styles, str) else tuple(styles)
        return [r for r in self.records if r.style in styles and r.split == split]

    def matrix(self, record):
        try:
            return self.features[record.sample_id]
        except KeyError:
            raise KeyError(f"no features for sample {record.sample_id!r}") from None

    def validate(self):
        ids = [r.sample_id for r in self.records]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate sample ids in corpus")
        roster = {s: {r.writer_id for r in self.records if r.style == s} for s in STYLES}
        present = [s for s in STYLES if roster[s]]
        if any(roster[s] != roster[present[0]] for s in present):
            raise IncompleteSetError("style sets hold different writer rosters")
        return self


# ---------------------------------------------------------------------------
# pipelines


@dataclass
class Pipeline:
    """Classifier plus page-level strategy.

    ``strategy`` is ``"major"`` (per-row vote), ``"mean"`` (per-patch scalar
    means) or ``"mean-concat"`` (component-wise mean of the patch rows).
    """

    estimator: object = field(default_factory=NearestCentroid)
    strategy: str = "major"
    n_patches: int = None
    name: str = "pipeline"

    def __post_init__(self):
        if self.strategy not in ("major", "mean", "mean-concat"):
            raise ValueError(f"unknown strategy {self.strategy!r}")

    def _page_vector(self, M):
        mode = "scalar" if self.strategy == "mean" else "concat"
        return mean_vector(M, self.n_patches, mode)

    def fit(self, corpus, records):
        if not records:
            raise ValueError("empty training set")
        if self.strategy == "major":
            X = np.vstack([corpus.matrix(r) for r in records])
            y = np.concatenate([[r.writer_id] * len(corpus.matrix(r)) for r in records])
        else:
            X = np.vstack([self._page_vector(corpus.matrix(r)) for r in records])
            y = np.array([r.writer_id for r in records])
        model = clone(self.estimator)
        model.fit(X, y)
        return model

    def decide(self, model, corpus, record):
        M = check_feature_matrix(corpus.matrix(record))
        if self.strategy == "major":
            labels = model.predict(M)
            votes = np.bincount(np.searchsorted(model.classes_, labels), minlength=len(model.classes_))
            return PageDecision(record.sample_id, majority(labels), votes / len(labels), list(labels))
        scores = model.decision_function(self._page_vector(M)[None])[0]
        return PageDecision(record.sample_id, model.classes_[int(np.argmax(scores))], scores)


@dataclass
class SetupResult:
    top1: float
    top2: float
    top5: float
    n_test: int


def _score(model, pipeline, corpus, test):
    if not test:
        raise ValueError("empty test set")
    decisions = [pipeline.decide(model, corpus, r) for r in test]
    truths = [r.writer_id for r in test]
    scores = [d.score_vector for d in decisions]
    hits1 = np.array([d.final_writer == t for d, t in zip(decisions, truths)])
    top1 = float(hits1.mean())
    # the decision itself always counts towards Top-N
    top2 = float(np.mean(top_n_hits(scores, truths, model.classes_, 2) | hits1))
    top5 = float(np.mean(top_n_hits(scores, truths, model.classes_, 5) | hits1))
    return SetupResult(top1, top2, top5, len(test))


def run_setup(corpus, train_styles, test_style, pipeline, model=None):
    """Train on the train split of ``train_styles``, test on the test split
    of ``test_style``; returns Top-1/2/5 page accuracies."""
    if model is None:
        model = pipeline.fit(corpus, corpus.select(train_styles, "train"))
    return _score(model, pipeline, corpus, corpus.select(test_style, "test"))


@dataclass
class NineTuple:
    values: dict
    top2: dict = field(default_factory=dict)
    top5: dict = field(default_factory=dict)
    runs: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def as_list(self):
        return [self.values[k] for k in NINE]


def nine_tuple(corpus, pipeline):
    """Run the twelve underlying setups and fold them into nine accuracies
    (in percent).  The all-style model is trained once and tested on each
    style."""
    models = {}

    def model_for(styles):
        if styles not in models:
            models[styles] = pipeline.fit(corpus, corpus.select(styles, "train"))
        return models[styles]

    runs = {}
    for a in STYLES:
        for b in STYLES:
            key = f"E_{STYLE_KEYS[a]}{STYLE_KEYS[b]}"
            runs[key] = run_setup(corpus, (a,), b, pipeline, model_for((a,)))
    for b in STYLES:
        runs[f"E_smf/{STYLE_KEYS[b]}"] = run_setup(corpus, STYLES, b, pipeline, model_for(STYLES))

    def pct(attr, key):
        return 100.0 * getattr(runs[key], attr)

    out = {}
    for attr in ("top1", "top2", "top5"):
        t = {}
        for s in "smf":
            t[f"AE_{s}{s}"] = pct(attr, f"E_{s}{s}")
        for a, b in (("s", "m"), ("s", "f"), ("m", "f")):
            t[f"AE_{a}{b}v"] = (pct(attr, f"E_{a}{b}") + pct(attr, f"E_{b}{a}")) / 2.0
        for s in "smf":
            t[f"AE_smf/{s}"] = pct(attr, f"E_smf/{s}")
        out[attr] = {k: t[k] for k in NINE}
    return NineTuple(out["top1"], out["top2"], out["top5"], {k: asdict(v) for k, v in runs.items()})


# ---------------------------------------------------------------------------
# Borda


@dataclass
class BordaRanking:
    model_ids: list
    per_metric_ranks: dict
    points: dict
    aggregate_rank: dict

    @property
    def order(self):
        return sorted(self.model_ids, key=lambda m: self.aggregate_rank[m])


def borda_rank(models):
    """Rank models given as ``(model_id, NineTuple or sequence of 9)``.

    On each metric a model earns ``M - 1 - (#models strictly better)``
    points; its aggregate is the maximum over the nine metrics.  Equal
    aggregates are ordered by the cross-style sum, then by model id.
    """
    if len(models) < 2:
        raise ValueError("Borda ranking needs at least two models")
    ids = [m for m, _ in models]
    if len(set(ids)) != len(ids):
        raise ValueError("model ids must be unique")
    table = {}
    for mid, tup in models:
        vals = tup.as_list() if isinstance(tup, NineTuple) else list(tup)
        if len(vals) != len(NINE):
            raise ValueError(f"model {mid!r} has {len(vals)} accuracies, expected 9")
        table[mid] = np.asarray(vals, dtype=float)
    M = len(ids)
    ranks, points = {}, {}
    for mid in ids:
        better = np.array([sum(table[o][j] > table[mid][j] for o in ids) for j in range(len(NINE))])
        ranks[mid] = (1 + better).tolist()
        points[mid] = int(np.max(M - 1 - better))
    cross_idx = [NINE.index(k) for k in CROSS]

    def key(mid):
        return (-points[mid], -float(table[mid][cross_idx].sum()), str(mid))

    order = sorted(ids, key=key)
    return BordaRanking(ids, ranks, points, {m: i + 1 for i, m in enumerate(order)})


# ---------------------------------------------------------------------------
# corpus merging


def merge_corpora(c1, c2, prefix="b:"):
    """Union of two corpora; writer and sample ids of ``c2`` that collide
    with ``c1`` are prefixed."""
    w1 = {r.writer_id for r in c1.records}
    s1 = {r.sample_id for r in c1.records}
    w2 = {r.writer_id for r in c2.records}
    s2 = {r.sample_id for r in c2.records}
    remap_w = bool(w1 & w2)
    remap_s = remap_w or bool(s1 & s2)
    records = list(c1.records)
    feats = dict(c1.features)
    for r in c2.records:
        new = replace(
            r,
            writer_id=prefix + r.writer_id if remap_w else r.writer_id,
            sample_id=prefix + r.sample_id if remap_s else r.sample_id,
            parent_page_id=(prefix + r.parent_page_id if remap_s and r.parent_page_id else r.parent_page_id),
        )
        records.append(new)
        if r.sample_id in c2.features:
            feats[new.sample_id] = c2.features[r.sample_id]
    if len({r.sample_id for r in records}) != len(records):
        raise ValueError("sample ids still collide after remapping; choose another prefix")
    return Corpus(records, feats)


# ---------------------------------------------------------------------------
# feature banks


@dataclass(frozen=True)
class FeatureConfig:
    family: str = "fdh"
    n_patches: int = 16
    n_char: int = 116
    patch_mode: str = "char"
    seed: int = 0

    def __post_init__(self):
        if self.family not in features.FAMILY_DIMS:
            raise ValueError(f"unknown feature family {self.family!r}")
        if self.patch_mode not in patch_mod.PATCH_MODES + ("page",):
            raise ValueError(f"unknown patch mode {self.patch_mode!r}")


def sample_seed(sample_id, seed):
    return (zlib.crc32(sample_id.encode()) ^ (int(seed) * 0x9E3779B1)) & 0xFFFFFFFF


def _patch_row(page, patch, family, epsilon):
    mask = patch.pixels.astype(bool)
    if family == "fdh":
        cs = features.imaging.trace_contours(mask)
        return np.concatenate(
            [features.contour_direction_hist(cs, epsilon), features.contour_hinge_hist(cs, epsilon)]
        )
    if family == "fdc":
        size = mask.shape[0]
        if patch.kind == "allo":
            cfg = patch_mod.PatchConfig(size)
            sk = patch_mod._allo_at(page.pruned.image, patch.center, cfg, "").pixels
        else:
            sk = patch_mod._window(page.pruned.image, patch.center, size)
        skel = features.imaging.Skeleton.from_mask(sk)
        return features.keypoint_direction_curvature(features.imaging.skeleton_graph(skel))
    return features.extract_fmm(PageAnalysis(mask)).values


def sample_features(image, sample_id, cfg, stroke_stats=None):
    """Feature rows of one sample: one row per patch, or one page row when
    ``cfg.patch_mode == "page"``.

    ``stroke_stats`` fixes the contour step (taken from the parent half for
    augmented variants); it is estimated from the sample otherwise.
    """
    page = PageAnalysis(image)
    if stroke_stats is not None:
        page.__dict__["stroke_stats"] = stroke_stats
    if cfg.patch_mode == "page":
        return features.extract(cfg.family, page, sample_id).values[None, :]
    eps = page.epsilon
    pcfg = patch_mod.PatchConfig(cfg.n_char)
    picked = patch_mod.sample_patches(
        page, cfg.n_patches, sample_seed(sample_id, cfg.seed), cfg.patch_mode, pcfg, sample_id
    )
    return np.vstack([_patch_row(page, p, cfg.family, eps) for p in picked])


def expand_writer_style(pages, page_ids, aug_cfg):
    """Expand a writer's two pages of one style and split them 22/11/11.

    Returns ``[(split, ExpandedSample)]``.
    """
    expanded = [
        augment.expand_page(img, pid, replace(aug_cfg, seed=sample_seed(pid, aug_cfg.seed)))
        for img, pid in zip(pages, page_ids)
    ]
    train, val, test = augment.split211(expanded)
    return [("train", s) for s in train] + [("val", s) for s in val] + [("test", s) for s in test]


def featurise_samples(samples, cfg):
    """Feature bank for ``[(sample_id, image, parent_key)]``.

    Samples sharing a ``parent_key`` (the half they were cut from) share the
    stroke statistics of the first sample seen with that key, which is the
    unaugmented half when samples come in expansion order.
    """
    stats = {}
    bank = {}
    for sid, image, parent in samples:
        st = stats.get(parent)
        if st is None:
            st = PageAnalysis(image).stroke_stats
            if parent is not None:
                stats[parent] = st
        bank[sid] = sample_features(image, sid, cfg, st)
    return bank


def synthetic_corpus(synth_cfg=SynthConfig(), aug_cfg=augment.AugmentConfig(),
                     feat_cfg=FeatureConfig(), keep_images=False, progress=None):
    """Render, expand, split and featurise a synthetic corpus in memory.

    Returns the :class:`Corpus` and, if requested, a dict of sample images.
    """
    if synth_cfg.pages_per_style != 2:
        raise IncompleteSetError("the 2:1:1 protocol needs exactly two pages per style")
    by_key = {}
    for writer, style, p, gray, _ in corpus_pages(synth_cfg):
        by_key.setdefault((writer, style), []).append((f"{writer}-{style}-p{p}", gray))
    records, bank, images = [], {}, {}
    for (writer, style), pages in by_key.items():
        ids = [pid for pid, _ in pages]
        batch = []
        for split, s in expand_writer_style([g for _, g in pages], ids, aug_cfg):
            records.append(
                SampleRecord(s.sample_id, writer, style, split, s.parent_page_id, s.half, s.variant_index)
            )
            batch.append((s.sample_id, s.image, (s.parent_page_id, s.half)))
            if keep_images:
                images[s.sample_id] = s.image
        bank.update(featurise_samples(batch, feat_cfg))
        if progress:
            progress(writer, style)
    return Corpus(records, bank).validate(), images


def load_corpus(manifest, feature_records):
    """Corpus from manifest records and feature-file records.

    Rows of one sample are stacked in ``patch_id`` order.  Manifest entries
    without a split are left out, since they cannot take part in a setup.
    """
    rows = {}
    for rec in feature_records:
        rows.setdefault(rec.sample_id, []).append((rec.patch_id, np.asarray(rec.values, dtype=float)))
    records = [
        SampleRecord(m.sample_id, m.writer_id, m.style, m.split, m.parent_page_id, m.half, m.variant_index)
        for m in manifest
        if m.split is not None
    ]
    missing = [r.sample_id for r in records if r.sample_id not in rows]
    if missing:
        raise KeyError(f"{len(missing)} manifest samples have no features, e.g. {missing[0]!r}")
    bank = {
        r.sample_id: np.vstack([v for _, v in sorted(rows[r.sample_id], key=lambda t: t[0])])
        for r in records
    }
    return Corpus(records, bank).validate()
