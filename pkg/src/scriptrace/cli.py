"""Command line interface.

Every flag can also come from a TOML or JSON file given with ``--config``.
Top-level keys apply to every subcommand and a table named after a
subcommand applies to that subcommand only; flags typed on the command line
win.  ``SCRIPTRACE_SEED`` overrides every seed.
"""

import argparse
import csv
from dataclasses import replace
import json
import logging
import os
from pathlib import Path
import sys

import numpy as np
from PIL import Image

from . import augment, cluster, evaluation, identify, imaging, io, verify
from .exceptions import ScriptraceError
from .page import PageAnalysis
from .synth import SynthConfig, corpus_pages

log = logging.getLogger("scriptrace")


# ---------------------------------------------------------------------------
# file helpers


def _read_gray(path):
    with Image.open(path) as im:
        return np.asarray(im.convert("L"))


def _write_png(arr, path):
    arr = np.asarray(arr)
    if arr.dtype == bool:
        arr = np.where(arr, 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path, format="PNG")


def _image_path(manifest_path, rec):
    p = Path(rec.image_path)
    return p if p.is_absolute() else Path(manifest_path).parent / p


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([io.format_float(v) if isinstance(v, float) else v for v in row])


def _write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=io.json_default)
        fh.write("\n")


def _prefix(out, suffix):
    return Path(f"{out}{suffix}")


def _load_corpus(args):
    if not args.manifest or not args.features:
        raise ValueError("--manifest and --features are required")
    manifest = io.read_manifest(args.manifest)
    feats = io.read_features(args.features, known_ids=[m.sample_id for m in manifest])
    return evaluation.load_corpus(manifest, feats)


def _page_vectors(corpus, records):
    return np.vstack([corpus.matrix(r).mean(axis=0) for r in records])


def _styles(value):
    styles = tuple(s.strip() for s in value.split(",") if s.strip())
    bad = [s for s in styles if s not in io.STYLES]
    if bad:
        raise ValueError(f"unknown style(s) {bad}; use {io.STYLES}")
    return styles


def _estimator(args):
    params = {}
    if args.backend in ("nearestCentroid", "knn"):
        params["metric"] = args.metric
    if args.backend == "knn":
        params["k"] = args.knn_k
    if args.backend == "linearOneVsAll":
        params.update(epochs=args.epochs, learning_rate=args.learning_rate)
    return identify.make_backend(args.backend, **params)


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args):
    out = Path(args.out)
    (out / "pages").mkdir(parents=True, exist_ok=True)
    cfg = SynthConfig(args.writers, args.pages_per_style, args.severity, args.seed)
    records = []
    for writer, style, p, gray, elapsed in corpus_pages(cfg):
        sid = f"{writer}-{style}-p{p}"
        rel = Path("pages") / f"{sid}.png"
        _write_png(gray, out / rel)
        records.append(
            io.ManifestRecord(sid, writer, style, parent_page_id=sid, image_path=str(rel),
                              elapsed_seconds=round(elapsed, 6), half="full")
        )
    io.write_manifest(records, out / "manifest.jsonl")
    log.info("wrote %d pages to %s", len(records), out)


def cmd_preprocess(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for rec in io.read_manifest(args.manifest):
        page = PageAnalysis(_read_gray(_image_path(args.manifest, rec)))
        _write_png(page.mask, out / f"{rec.sample_id}-ink.png")
        _write_png(page.pruned.image, out / f"{rec.sample_id}-skeleton.png")
        st = page.stroke_stats
        rows.append([
            rec.sample_id, int(page.threshold), int(page.mask.sum()),
            imaging.component_count(page.mask), imaging.euler_number(page.mask),
            page.pruned.stroke_length_px, float(st.mean_width), float(st.std_width),
            int(page.epsilon), len(page.keypoints), len(page.graph.edges),
            len(page.layout.lines), page.layout.character_count,
        ])
    header = ["sample_id", "threshold", "ink_pixels", "components", "euler", "stroke_length",
              "width_mean", "width_std", "epsilon", "keypoints", "edges", "lines", "characters"]
    _write_csv(out / "preprocess.csv", header, rows)
    _write_json([dict(zip(header, r)) for r in rows], out / "preprocess.json")


def cmd_augment(args):
    out = Path(args.out)
    (out / "samples").mkdir(parents=True, exist_ok=True)
    pages = io.read_manifest(args.manifest)
    groups = {}
    for rec in pages:
        groups.setdefault((rec.writer_id, rec.style), []).append(rec)
    cfg = augment.AugmentConfig(args.alpha_d, args.seed)
    records, rows = [], []
    for (writer, style), recs in sorted(groups.items()):
        recs = sorted(recs, key=lambda r: r.sample_id)
        images = [_read_gray(_image_path(args.manifest, r)) for r in recs]
        for split, s in evaluation.expand_writer_style(images, [r.sample_id for r in recs], cfg):
            rel = Path("samples") / f"{s.sample_id}.png"
            _write_png(s.image, out / rel)
            records.append(io.ManifestRecord(
                s.sample_id, writer, style, split, s.parent_page_id, s.variant_index,
                str(rel), None, s.half,
            ))
            rows.append([s.sample_id, split, s.half, s.variant_index, s.removed_edges, int(s.warning)])
    io.write_manifest(records, out / "manifest.jsonl")
    _write_csv(out / "augment.csv",
               ["sample_id", "split", "half", "variant", "removed_edges", "warning"], rows)
    log.info("expanded %d pages into %d samples", len(pages), len(records))


def cmd_features(args):
    manifest = io.read_manifest(args.manifest)
    cfg = evaluation.FeatureConfig(args.family, args.n_patches, args.n_char, args.patch_mode, args.seed)
    # unaugmented halves first so their variants reuse their stroke statistics
    order = sorted(range(len(manifest)), key=lambda i: (manifest[i].variant_index, i))
    samples = [
        (manifest[i].sample_id, _read_gray(_image_path(args.manifest, manifest[i])),
         (manifest[i].parent_page_id, manifest[i].half) if manifest[i].parent_page_id else None)
        for i in order
    ]
    bank = evaluation.featurise_samples(samples, cfg)
    records = []
    for rec in manifest:
        M = bank[rec.sample_id]
        for j, row in enumerate(M):
            pid = "page" if cfg.patch_mode == "page" else f"p{j:03d}"
            records.append(io.FeatureFileRecord(rec.sample_id, pid, cfg.family, M.shape[1], row.tolist()))
    io.write_features(records, args.out)


def cmd_identify(args):
    corpus = _load_corpus(args)
    pipe = evaluation.Pipeline(_estimator(args), args.strategy)
    train = corpus.select(_styles(args.train_styles), args.train_split)
    test = corpus.select(_styles(args.test_styles), args.test_split)
    if not test:
        raise ValueError("empty test set")
    model = pipe.fit(corpus, train)
    if args.save_model:
        identify.save_model(model, args.save_model)
    decisions = [pipe.decide(model, corpus, r) for r in test]
    truths = [r.writer_id for r in test]
    hit1 = np.array([d.final_writer == t for d, t in zip(decisions, truths)])
    hitn = identify.top_n_hits([d.score_vector for d in decisions], truths, model.classes_, args.top_n) | hit1
    rows = [[r.sample_id, r.writer_id, d.final_writer, int(a), int(b)]
            for r, d, a, b in zip(test, decisions, hit1, hitn)]
    _write_csv(_prefix(args.out, ".csv"),
               ["sample_id", "writer_id", "predicted", "top1", f"top{args.top_n}"], rows)
    summary = {
        "backend": args.backend, "strategy": args.strategy, "n_test": len(test),
        "top1": float(hit1.mean()), "top_n": args.top_n, f"top{args.top_n}": float(hitn.mean()),
    }
    _write_json(summary, _prefix(args.out, ".json"))
    print(f"top1 {100 * summary['top1']:.2f}%  top{args.top_n} {100 * hitn.mean():.2f}%")


def cmd_verify(args):
    corpus = _load_corpus(args)
    recs = [r for r in corpus.records
            if (args.split == "all" or r.split == args.split)
            and (args.include_variants or r.variant_index == 0)]
    X = _page_vectors(corpus, recs)
    same, diff = verify.pair_distances(X, [r.writer_id for r in recs], args.measure,
                                       [r.sample_id for r in recs])
    if not same or not diff:
        raise ValueError("need both same-writer and different-writer pairs")
    if args.mode == "eer":
        curve = verify.far_frr_curve([d for *_, d in diff], [d for *_, d in same])
        curve.to_csv(_prefix(args.out, ".csv"))
        summary = dict(curve.summary(), measure=args.measure, same_pairs=len(same), diff_pairs=len(diff))
        print(f"EER {curve.eer:.4f}  accuracy {curve.accuracy_pct:.2f}%")
    else:
        res = verify.threshold_sweep(same, diff, args.step)
        margin = verify.default_margin([d for *_, d in same + diff])
        summary = dict(res.summary(), measure=args.measure, margin=margin,
                       same_pairs=len(same), diff_pairs=len(diff))
        if margin > 0:
            params = verify.ContrastiveParams(margin)
            losses = [verify.contrastive_loss(d, 0, params) for *_, d in same]
            losses += [verify.contrastive_loss(d, 1, params) for *_, d in diff]
            summary["mean_contrastive_loss"] = float(np.mean(losses))
        _write_csv(_prefix(args.out, ".csv"), ["best_d", "tpr", "tnr", "accuracy", "step", "margin"],
                   [[res.best_d, res.tpr, res.tnr, res.accuracy, float(res.step), margin]])
        print(f"best d {res.best_d:.4f}  accuracy {100 * res.accuracy:.2f}%")
    _write_json(summary, _prefix(args.out, ".json"))


def _speed_report(args):
    manifest = io.read_manifest(args.manifest)
    pages = [m for m in manifest if m.elapsed_seconds is not None]
    if not pages:
        raise ValueError("speed labelling needs manifest records with elapsed_seconds")
    speeds = {}
    for m in pages:
        length = PageAnalysis(_read_gray(_image_path(args.manifest, m))).skeleton.stroke_length_px
        speeds[m.sample_id] = cluster.SpeedRecord(float(length), m.elapsed_seconds)
    rows, hits = [], []
    for writer in sorted({m.writer_id for m in pages}):
        mine = [m for m in pages if m.writer_id == writer]
        th = cluster.SpeedThresholds.from_records(
            [speeds[m.sample_id] for m in mine if m.style == "medium"], args.alpha_s)
        for m in mine:
            lab = cluster.speed_label(speeds[m.sample_id].speed, th)
            rows.append([m.sample_id, writer, m.style, speeds[m.sample_id].speed, th.t1, th.t2, lab])
            hits.append(lab == m.style)
    _write_csv(_prefix(args.out, ".csv"),
               ["sample_id", "writer_id", "style", "speed", "t1", "t2", "label"], rows)
    _write_json({"alpha_s": args.alpha_s, "pages": len(rows), "agreement": float(np.mean(hits))},
                _prefix(args.out, ".json"))


def cmd_cluster(args):
    if args.speed:
        return _speed_report(args)
    corpus = _load_corpus(args)
    recs = [r for r in corpus.records if args.split == "all" or r.split == args.split]
    X = _page_vectors(corpus, recs)
    ids = [r.sample_id for r in recs]
    runs = [cluster.cluster_vectors(X, args.k, args.method, args.seed + i, ids).labels
            for i in range(args.runs)]
    labels = runs[0] if args.runs == 1 else cluster.majority_group_pages(runs, ids, align=True, k=args.k)
    truth = [getattr(r, "writer_id" if args.label_by == "writer" else "style") for r in recs]
    score = cluster.nmi(labels, truth)
    _write_csv(_prefix(args.out, ".csv"), ["sample_id", "cluster", args.label_by],
               [[i, int(c), t] for i, c, t in zip(ids, labels, truth)])
    _write_json({"method": args.method, "k": args.k, "runs": args.runs, "nmi": score,
                 "label_by": args.label_by, "items": len(ids)}, _prefix(args.out, ".json"))
    print(f"NMI {score:.4f}")


def _nine_report(name, tup):
    return {"model": name, "top1": tup.values, "top2": tup.top2, "top5": tup.top5, "runs": tup.runs}


def cmd_eval(args):
    if args.borda:
        return _borda(args)
    if not args.nine_tuple:
        raise ValueError("choose --nine-tuple or --borda")
    if args.synthetic:
        corpus, _ = evaluation.synthetic_corpus(
            SynthConfig(args.writers, 2, args.severity, args.seed),
            augment.AugmentConfig(args.alpha_d, args.seed),
            evaluation.FeatureConfig(args.family, args.n_patches, args.n_char, args.patch_mode, args.seed),
        )
    else:
        corpus = _load_corpus(args)
    pipe = evaluation.Pipeline(_estimator(args), args.strategy, name=args.name)
    tup = evaluation.nine_tuple(corpus, pipe)
    rows = [[args.name, level] + [getattr(tup, "values" if level == "top1" else level)[k] for k in evaluation.NINE]
            for level in ("top1", "top2", "top5")]
    _write_csv(_prefix(args.out, ".csv"), ["model", "measure"] + list(evaluation.NINE), rows)
    _write_json(_nine_report(args.name, tup), _prefix(args.out, ".json"))
    print(" ".join(f"{k}={tup.values[k]:.2f}" for k in evaluation.NINE))


def _borda(args):
    models = []
    for path in args.borda:
        with open(path) as fh:
            rep = json.load(fh)
        models.append((rep["model"], [float(rep["top1"][k]) for k in evaluation.NINE]))
    rank = evaluation.borda_rank(models)
    table = dict(models)
    rows = [[m] + table[m] + [rank.points[m], rank.aggregate_rank[m]] for m in rank.order]
    _write_csv(_prefix(args.out, ".csv"), ["model"] + list(evaluation.NINE) + ["points", "rank"], rows)
    _write_json({"order": rank.order, "points": rank.points, "per_metric_ranks": rank.per_metric_ranks,
                 "rank": rank.aggregate_rank}, _prefix(args.out, ".json"))
    for m in rank.order:
        print(rank.aggregate_rank[m], m)


def cmd_merge(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ma, mb = io.read_manifest(args.manifest_a), io.read_manifest(args.manifest_b)
    fa, fb = io.read_features(args.features_a), io.read_features(args.features_b)
    wa = {m.writer_id for m in ma}
    sa = {m.sample_id for m in ma}
    remap_w = bool(wa & {m.writer_id for m in mb})
    remap_s = remap_w or bool(sa & {m.sample_id for m in mb})
    p = args.prefix

    def rel(manifest_path, rec):
        if rec.image_path is None:
            return None
        return os.path.relpath(_image_path(manifest_path, rec).resolve(), out.resolve())

    merged = [replace(m, image_path=rel(args.manifest_a, m)) for m in ma]
    for m in mb:
        merged.append(replace(
            m,
            sample_id=p + m.sample_id if remap_s else m.sample_id,
            writer_id=p + m.writer_id if remap_w else m.writer_id,
            parent_page_id=p + m.parent_page_id if remap_s and m.parent_page_id else m.parent_page_id,
            image_path=rel(args.manifest_b, m),
        ))
    io.write_manifest(merged, out / "manifest.jsonl")
    feats = list(fa) + [replace(r, sample_id=p + r.sample_id if remap_s else r.sample_id) for r in fb]
    for r in feats:
        r.values = np.asarray(r.values).tolist()
    io.write_features(feats, out / "features.jsonl")
    log.info("merged roster: %d writers", len({m.writer_id for m in merged}))


# ---------------------------------------------------------------------------
# parser


def _add_identify_flags(sp):
    sp.add_argument("--backend", default="nearestCentroid", choices=sorted(identify.BACKENDS))
    sp.add_argument("--metric", default="euclidean", choices=verify.MEASURES)
    sp.add_argument("--knn-k", type=int, default=3)
    sp.add_argument("--epochs", type=int, default=200)
    sp.add_argument("--learning-rate", type=float, default=0.5)
    sp.add_argument("--strategy", default="major", choices=("major", "mean", "mean-concat"),
                    help="page decision: patch vote, per-patch scalar means, or "
                         "mean-concat (component-wise patch mean, an extension)")


def _add_corpus_flags(sp, required=True):
    sp.add_argument("--manifest", required=required)
    sp.add_argument("--features", required=required)


def build_parser():
    parser = argparse.ArgumentParser(prog="scriptrace", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="TOML or JSON file with default flag values")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="render a synthetic corpus")
    sp.add_argument("--out", required=True)
    sp.add_argument("--writers", type=int, default=25)
    sp.add_argument("--pages-per-style", type=int, default=2)
    sp.add_argument("--severity", type=float, default=0.7)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("preprocess", help="binarize, thin and measure pages")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_preprocess)

    sp = sub.add_parser("augment", help="half-page split, stroke dropping and 2:1:1 split")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--alpha-d", type=float, default=0.1)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_augment)

    sp = sub.add_parser("features", help="extract patch or page features")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--family", default="fdh", choices=("fmm", "fdh", "fdc"))
    sp.add_argument("--n-patches", type=int, default=16)
    sp.add_argument("--n-char", type=int, default=116)
    sp.add_argument("--patch-mode", default="char", choices=("char", "allo", "arbitrary", "page"))
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_features)

    sp = sub.add_parser("identify", help="train on one split and identify writers of another")
    _add_corpus_flags(sp)
    _add_identify_flags(sp)
    sp.add_argument("--top-n", type=int, default=5)
    sp.add_argument("--train-styles", default="slow,medium,fast")
    sp.add_argument("--test-styles", default="slow,medium,fast")
    sp.add_argument("--train-split", default="train", choices=io.SPLITS)
    sp.add_argument("--test-split", default="test", choices=io.SPLITS)
    sp.add_argument("--save-model")
    sp.add_argument("--out", required=True, help="report path prefix")
    sp.set_defaults(func=cmd_identify)

    sp = sub.add_parser("verify", help="same-writer verification reports")
    _add_corpus_flags(sp)
    sp.add_argument("--measure", default="chi2", choices=verify.MEASURES)
    sp.add_argument("--mode", default="eer", choices=("eer", "sweep"))
    sp.add_argument("--split", default="test", choices=io.SPLITS + ("all",))
    sp.add_argument("--include-variants", action="store_true")
    sp.add_argument("--step", type=float, default=verify.SWEEP_STEP)
    sp.add_argument("--out", required=True, help="report path prefix")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("cluster", help="cluster samples or label pages by writing speed")
    _add_corpus_flags(sp, required=False)
    sp.add_argument("--method", default="kmeans", choices=cluster.METHODS)
    sp.add_argument("--k", type=int, default=3)
    sp.add_argument("--runs", type=int, default=1, help="clusterings combined by majority vote")
    sp.add_argument("--label-by", default="style", choices=("style", "writer"))
    sp.add_argument("--split", default="all", choices=io.SPLITS + ("all",))
    sp.add_argument("--speed", action="store_true", help="speed thresholds instead of clustering")
    sp.add_argument("--alpha-s", type=float, default=cluster.ALPHA_S)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True, help="report path prefix")
    sp.set_defaults(func=cmd_cluster)

    sp = sub.add_parser("eval", help="nine-tuple reports and Borda ranking")
    _add_corpus_flags(sp, required=False)
    _add_identify_flags(sp)
    sp.add_argument("--nine-tuple", action="store_true")
    sp.add_argument("--borda", nargs="+", metavar="REPORT_JSON")
    sp.add_argument("--synthetic", action="store_true", help="build the synthetic corpus in memory")
    sp.add_argument("--writers", type=int, default=25)
    sp.add_argument("--severity", type=float, default=0.7)
    sp.add_argument("--alpha-d", type=float, default=0.1)
    sp.add_argument("--family", default="fdh", choices=("fmm", "fdh", "fdc"))
    sp.add_argument("--n-patches", type=int, default=16)
    sp.add_argument("--n-char", type=int, default=116)
    sp.add_argument("--patch-mode", default="char", choices=("char", "allo", "arbitrary", "page"))
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--name", default="model")
    sp.add_argument("--out", required=True, help="report path prefix")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("merge", help="union of two corpora with id remapping")
    sp.add_argument("--manifest-a", required=True)
    sp.add_argument("--features-a", required=True)
    sp.add_argument("--manifest-b", required=True)
    sp.add_argument("--features-b", required=True)
    sp.add_argument("--prefix", default="b:")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_merge)
    return parser


def _apply_config(parser, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    if not known.config:
        return
    cfg = io.load_config(known.config)
    command = next((a for a in rest if not a.startswith("-")), None)
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for name, sp in subparsers.choices.items():
        values = {k: v for k, v in cfg.items() if not isinstance(v, dict)}
        values.update(cfg.get(name, {}))
        dests = {a.dest for a in sp._actions}
        defaults = {}
        for key, value in values.items():
            dest = key.replace("-", "_")
            if dest in dests:
                defaults[dest] = value
            elif name == command and key not in subparsers.choices:
                raise ValueError(f"config key {key!r} is not a flag of {name!r}")
        # a config value satisfies a required flag
        for a in sp._actions:
            if a.dest in defaults:
                a.required = False
        sp.set_defaults(**defaults)


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s")
        if hasattr(args, "seed"):
            args.seed = io.resolve_seed(args.seed)
        args.func(args)
    except (ScriptraceError, ValueError, KeyError, OSError) as exc:
        print(f"scriptrace: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
