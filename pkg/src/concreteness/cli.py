"""Command-line surface: indexing, scoring, alignment, evaluation, analytics.

Every subcommand echoes its effective configuration to a ``run.json`` next to
its primary outputs, writes all files atomically, and is deterministic for a
fixed seed: identical invocations produce byte-identical outputs regardless
of thread count. Exit codes: 0 success, 1 data/runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import alignment, analysis, data, knn, scoring, synth
from .data import FormatError
from .util import resolve_threads, write_json


class UsageError(Exception):
    """Bad flag combination or missing input file; exits with code 2."""


# ---------------------------------------------------------------------------
# argparse plumbing


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _nonneg_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _positive_float(text: str) -> float:
    value = _nonneg_float(text)
    if value == 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return value


def _fraction(text: str) -> float:
    value = _nonneg_float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"must be in (0, 1), got {value}")
    return value


def _percent_list(text: str) -> tuple[float, ...]:
    out = []
    for piece in text.split(","):
        try:
            p = float(piece)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {piece!r}") from None
        if not 0.0 < p <= 100.0:
            raise argparse.ArgumentTypeError(f"percent must be in (0, 100], got {p}")
        out.append(p)
    if not out:
        raise argparse.ArgumentTypeError("empty percent list")
    return tuple(out)


def _int_list(text: str) -> tuple[int, ...]:
    try:
        out = tuple(int(piece) for piece in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer list: {text!r}") from None
    if not out or any(v < 1 for v in out):
        raise argparse.ArgumentTypeError("need positive integers")
    return out


def _need_file(path, flag: str) -> Path:
    if path is None:
        raise UsageError(f"{flag} is required")
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"{flag}: file not found: {path}")
    return path


def _run_json(out_dir: Path, command: str, args: argparse.Namespace, audit: "dict | None" = None, name="run.json"):
    skip = {"func", "threads"}
    config = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    payload = {"command": command, "config": config}
    if audit is not None:
        payload["audit"] = audit
    write_json(Path(out_dir) / name, payload)


def _metrics_payload(result: alignment.RetrievalResult) -> dict:
    return {
        "n_instances": len(result.ids),
        "n_excluded": len(result.excluded),
        "recall": {f"{p:g}": result.recall[p] for p in result.p_values},
        "recall_img2txt": {f"{p:g}": result.recall_img2txt[p] for p in result.p_values},
        "recall_txt2img": {f"{p:g}": result.recall_txt2img[p] for p in result.p_values},
    }


def _load_features_pair(args) -> data.DatasetBundle:
    img = data.load_features(_need_file(args.images, "--images"), args.format)
    txt = data.load_features(_need_file(args.texts, "--texts"), args.format)
    split = None
    if getattr(args, "split", None) is not None:
        split = data.load_split(_need_file(args.split, "--split"), img)
    return data.DatasetBundle(img, txt, None, None, split)


# ---------------------------------------------------------------------------
# subcommands


def cmd_index(args) -> int:
    features = data.load_features(_need_file(args.features, "--features"), args.format)
    mode = "approximate" if args.mode == "approx" else args.mode
    config = knn.KnnConfig(
        k=args.k,
        metric=args.metric,
        mode=mode,
        num_trees=args.trees,
        search_budget=args.budget,
        seed=args.seed,
    )
    index = knn.build_index(features, config, threads=resolve_threads(args.threads))
    out = Path(args.output)
    index.save(out)
    _run_json(out.parent, "index", args, name=out.name + ".run.json")
    print(f"indexed {features.n} rows (d={features.d}, mode={mode}) -> {out}")
    return 0


def _score_common(args, report: scoring.ConcretenessReport, command: str) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report.write_csv(out_dir / "scores.csv")
    report.write_json(out_dir / "scores.json")
    _run_json(out_dir, command, args)
    top = report.scores[0]
    print(f"scored {len(report.scores)} concepts; top: {top.concept} ({top.score:.3f}) -> {out_dir}")
    return 0


def cmd_score(args) -> int:
    index = knn.Index.load(_need_file(args.index, "--index"))
    concepts = data.load_concepts(
        _need_file(args.concepts, "--concepts"), index.features, args.min_support
    )
    neighbors = index.all_neighbors(
        k=args.k, include_self=args.include_self, threads=resolve_threads(args.threads)
    )
    report = scoring.concreteness_discrete(
        neighbors,
        concepts,
        ci_method=args.ci,
        level=args.level,
        resamples=args.resamples,
        seed=args.seed,
        config_echo={
            "metric": index.config.metric,
            "mode": index.config.mode,
            "min_support": args.min_support,
        },
    )
    return _score_common(args, report, "score")


def cmd_topics_score(args) -> int:
    index = knn.Index.load(_need_file(args.index, "--index"))
    topics = data.load_topics(_need_file(args.topics, "--topics"), index.features)
    neighbors = index.all_neighbors(
        k=args.k, include_self=args.include_self, threads=resolve_threads(args.threads)
    )
    report = scoring.concreteness_continuous(
        neighbors,
        topics,
        ci_method=args.ci,
        level=args.level,
        resamples=args.resamples,
        seed=args.seed,
        config_echo={"metric": index.config.metric, "mode": index.config.mode},
    )
    return _score_common(args, report, "topics-score")


def _train(algo: str, img: np.ndarray, txt: np.ndarray, args):
    standardize = args.standardize
    if standardize == "auto" and algo != "ls":
        raise UsageError("--standardize auto is only available for --algo ls")
    flag = standardize == "zscore"
    if algo == "np":
        return alignment.train_np(img, txt, standardize=flag)
    if algo == "ls":
        mode = "auto" if standardize == "auto" else flag
        return alignment.train_ls(
            img, txt, lam=args.lam, val_fraction=args.val_fraction, seed=args.seed, standardize=mode
        )
    config = alignment.NsConfig(
        shared_dim=args.shared_dim,
        alpha=args.alpha,
        epochs=args.epochs,
        batch=args.batch,
        lr=args.lr,
        seed=args.seed,
        val_fraction=args.val_fraction,
        patience=args.patience,
    )
    return alignment.train_ns(img, txt, config, standardize=flag)


def cmd_align(args) -> int:
    if (args.folds is None) == (args.split is None):
        raise UsageError("provide exactly one of --split or --folds")
    if args.group_by is not None and args.folds is None:
        raise UsageError("--group-by requires --folds")
    bundle = _load_features_pair(args)
    img, txt = bundle.images.data, bundle.texts.data
    ids = bundle.images.ids
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.folds is None:
        tr, te = bundle.split.train, bundle.split.test
        model = _train(args.algo, img[tr], txt[tr], args)
        result = alignment.evaluate_retrieval(
            model, img[te], txt[te], tuple(ids[i] for i in te), args.p
        )
        alignment.save_model(model, out_dir / "model.vcaln")
        result.write_csv(out_dir / "eval.csv")
        write_json(out_dir / "metrics.json", _metrics_payload(result))
        _run_json(out_dir, "align", args)
        shown = ", ".join(f"R@{p:g}%={result.recall[p] * 100:.1f}%" for p in args.p)
        print(f"{args.algo} on {tr.size} train / {te.size} test: {shown} -> {out_dir}")
        return 0

    groups = None
    if args.group_by is not None:
        groups = synth.load_groups(_need_file(args.group_by, "--group-by"), bundle.images)
    folds = alignment.kfold_splits(bundle.images.n, args.folds, args.seed, groups)
    per_fold = []
    disjoint = True
    for f, (tr, te) in enumerate(folds):
        model = _train(args.algo, img[tr], txt[tr], args)
        result = alignment.evaluate_retrieval(
            model, img[te], txt[te], tuple(ids[i] for i in te), args.p
        )
        result.write_csv(out_dir / f"eval_fold{f:02d}.csv")
        payload = _metrics_payload(result)
        payload["fold"] = f
        payload["n_train"] = int(tr.size)
        per_fold.append(payload)
        if groups is not None and set(groups[tr]) & set(groups[te]):
            disjoint = False
    mean = {
        f"{p:g}": float(np.mean([fold["recall"][f"{p:g}"] for fold in per_fold])) for p in args.p
    }
    write_json(out_dir / "metrics.json", {"folds": per_fold, "mean_recall": mean})
    audit = {"grouped": groups is not None, "groups_disjoint_across_folds": disjoint}
    _run_json(out_dir, "align", args, audit=audit)
    shown = ", ".join(f"R@{p:g}%={mean[f'{p:g}'] * 100:.1f}%" for p in args.p)
    print(f"{args.algo} {args.folds}-fold mean: {shown} -> {out_dir}")
    return 0


def cmd_eval(args) -> int:
    model = alignment.load_model(_need_file(args.model, "--model"))
    bundle = _load_features_pair(args)
    if bundle.split is None:
        raise UsageError("--split is required")
    te = bundle.split.test
    result = alignment.evaluate_retrieval(
        model,
        bundle.images.data[te],
        bundle.texts.data[te],
        tuple(bundle.images.ids[i] for i in te),
        args.p,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result.write_csv(out_dir / "eval.csv")
    write_json(out_dir / "metrics.json", _metrics_payload(result))
    _run_json(out_dir, "eval", args)
    shown = ", ".join(f"R@{p:g}%={result.recall[p] * 100:.1f}%" for p in args.p)
    print(f"evaluated {len(result.ids)} instances: {shown} -> {out_dir}")
    return 0


def cmd_analyze(args) -> int:
    if (args.concepts is None) == (args.topics is None):
        raise UsageError("provide exactly one of --concepts or --topics")
    result = alignment.read_eval_csv(_need_file(args.eval, "--eval"))
    features = data.load_features(_need_file(args.images, "--images"), args.format)
    split = data.load_split(_need_file(args.split, "--split"), features)
    test_ids = tuple(features.ids[i] for i in split.test)
    if args.concepts is not None:
        concepts = data.load_concepts(_need_file(args.concepts, "--concepts"), features, args.min_support)
        affinity = analysis.affinity_discrete(concepts, split.test, test_ids)
    else:
        topics = data.load_topics(_need_file(args.topics, "--topics"), features)
        affinity = analysis.affinity_continuous(topics, split.test, test_ids)
    scores = scoring.read_scores_csv(_need_file(args.scores, "--scores"))

    retriev = analysis.retrievability(result, affinity, args.p)
    summary = analysis.correlation_summary(scores, retriev, log_x=args.log_x)
    if args.external is not None:
        external = analysis.load_external(_need_file(args.external, "--external"))
        rho, pval, overlap = analysis.correlate_external(scores, external)
        summary["external"] = {"spearman_rho": rho, "spearman_p": pval, "n_overlap": overlap}

    by_concept = scores.by_concept()
    shared = sorted(set(by_concept) & set(retriev.by_concept()))
    curve = analysis.binned_curve(
        [by_concept[c].score for c in shared],
        [retriev.by_concept()[c] for c in shared],
        bins=min(args.bins, len(shared)) if len(shared) >= 2 else args.bins,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    retriev.write_csv(out_dir / "retrievability.csv")
    from .util import atomic_write_bytes

    atomic_write_bytes(out_dir / "curve.csv", analysis.curve_to_csv_bytes(curve))
    analysis.write_summary(out_dir / "summary.json", summary)
    _run_json(out_dir, "analyze", args)
    print(
        f"concreteness vs retrievability: rho={summary['concreteness_spearman_rho']:.3f} "
        f"(p={summary['concreteness_spearman_p']:.2g}, n={summary['n_concepts']}) -> {out_dir}"
    )
    return 0


def cmd_synth(args) -> int:
    config = synth.SynthConfig(
        kind=args.kind,
        n=args.n,
        d_img=args.d_img,
        d_txt=args.d_txt,
        seed=args.seed,
        train_fraction=args.train_fraction,
        clusters=args.clusters,
        bg_fraction=args.bg_fraction,
        sigma_min=args.sigma_min,
        sigma_max=args.sigma_max,
        noise_min=args.noise_min,
        noise_max=args.noise_max,
        corrupt_max=args.corrupt_max,
        corrupt_power=args.corrupt_power,
        uniform_words=args.uniform_words,
        latent_dim=args.latent_dim,
        micro_clusters=args.micro_clusters,
    )
    dataset = synth.make_dataset(config)
    paths = synth.write_dataset(dataset, args.out_dir)
    _run_json(Path(args.out_dir), "synth", args)
    print(f"wrote {config.kind} dataset (n={config.n}) -> {args.out_dir}")
    return 0


def cmd_report(args) -> int:
    data_dir = Path(args.data)
    features = data.load_features(_need_file(data_dir / "images.vcf", "--data images.vcf"))
    texts = data.load_features(_need_file(data_dir / "texts.vcf", "--data texts.vcf"))
    concepts = data.load_concepts(
        _need_file(data_dir / "concepts.jsonl", "--data concepts.jsonl"), features, args.min_support
    )
    split = data.load_split(_need_file(data_dir / "split.json", "--data split.json"), features)
    topics = None
    if (data_dir / "topics.csv").is_file():
        topics = data.load_topics(data_dir / "topics.csv", features)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    threads = resolve_threads(args.threads)
    k_max = max(max(args.k_sweep), args.k)
    index = knn.build_index(features, knn.KnnConfig(k=k_max, mode="exact"), threads=threads)

    reports = {}
    for k in sorted(set(args.k_sweep) | {args.k}):
        neighbors = index.all_neighbors(k=k, threads=threads)
        rep = scoring.concreteness_discrete(
            neighbors, concepts, config_echo={"metric": "cosine", "mode": "exact", "min_support": args.min_support}
        )
        rep.write_csv(out_dir / f"scores_k{k}.csv")
        reports[k] = rep
    stability = {}
    sweep = sorted(set(args.k_sweep))
    for a, b in [(sweep[i], sweep[j]) for i in range(len(sweep)) for j in range(i + 1, len(sweep))]:
        left, right = reports[a].by_concept(), reports[b].by_concept()
        shared = sorted(set(left) & set(right))
        rho, _ = analysis.spearman([left[c].score for c in shared], [right[c].score for c in shared])
        stability[f"k{a}_vs_k{b}"] = rho
    if topics is not None:
        neighbors = index.all_neighbors(k=args.k, threads=threads)
        scoring.concreteness_continuous(
            neighbors, topics, config_echo={"metric": "cosine", "mode": "exact"}
        ).write_csv(out_dir / "topic_scores.csv")

    base = reports[args.k]
    tr, te = split.train, split.test
    test_ids = tuple(features.ids[i] for i in te)
    affinity = analysis.affinity_discrete(concepts, te, test_ids)
    models_summary = {}
    for algo in args.models:
        if algo == "np":
            model = alignment.train_np(features.data[tr], texts.data[tr])
        elif algo == "ls":
            model = alignment.train_ls(features.data[tr], texts.data[tr], lam=args.lam, seed=args.seed)
        else:
            model = alignment.train_ns(
                features.data[tr], texts.data[tr], alignment.NsConfig(seed=args.seed)
            )
        result = alignment.evaluate_retrieval(model, features.data[te], texts.data[te], test_ids, args.p)
        result.write_csv(out_dir / f"eval_{algo}.csv")
        retriev = analysis.retrievability(result, affinity, args.p[0])
        retriev.write_csv(out_dir / f"retrievability_{algo}.csv")
        summary = analysis.correlation_summary(base, retriev, log_x=args.log_x)
        models_summary[algo] = {
            "recall": {f"{p:g}": result.recall[p] for p in args.p},
            "analysis": summary,
        }
    top = base.scores[0]
    payload = {
        "n": features.n,
        "vocab": len(concepts.vocab),
        "k": args.k,
        "top_concept": {"concept": top.concept, "score": top.score},
        "stability_spearman": stability,
        "models": models_summary,
    }
    write_json(out_dir / "report.json", payload)
    _run_json(out_dir, "report", args)
    parts = [f"{m}: R@{args.p[0]:g}%={s['recall'][f'{args.p[0]:g}'] * 100:.1f}%" for m, s in models_summary.items()]
    print(f"report ({'; '.join(parts)}) -> {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vc",
        description="Visual concreteness scoring and cross-modal retrieval diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--threads", type=_positive_int, default=None, help="worker threads (default: VC_THREADS or all cores)")
        if seed:
            p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("index", help="build a nearest-neighbor index from a feature file")
    p.add_argument("--features", required=True)
    p.add_argument("--format", choices=("binary", "csv"), default="binary")
    p.add_argument("--k", type=_positive_int, default=50)
    p.add_argument("--metric", choices=("cosine", "euclidean"), default="cosine")
    p.add_argument("--mode", choices=("exact", "approx", "approximate"), default="exact")
    p.add_argument("--trees", type=_positive_int, default=32)
    p.add_argument("--budget", type=_positive_int, default=2000)
    p.add_argument("-o", "--output", required=True)
    common(p)
    p.set_defaults(func=cmd_index)

    def scoring_flags(p):
        p.add_argument("--index", required=True)
        p.add_argument("--k", type=_positive_int, default=None, help="override the indexed k")
        p.add_argument("--include-self", action="store_true", help="keep each row in its own neighbor list")
        p.add_argument("--ci", choices=("none", "normal", "bootstrap"), default="none")
        p.add_argument("--level", type=_fraction, default=0.95)
        p.add_argument("--resamples", type=_positive_int, default=1000)
        p.add_argument("--out-dir", required=True)
        common(p)

    p = sub.add_parser("score", help="concreteness of discrete words")
    p.add_argument("--concepts", required=True)
    p.add_argument("--min-support", type=_positive_int, default=data.DEFAULT_MIN_SUPPORT)
    scoring_flags(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("topics-score", help="concreteness of continuous topics")
    p.add_argument("--topics", required=True)
    scoring_flags(p)
    p.set_defaults(func=cmd_topics_score)

    p = sub.add_parser("align", help="train an image/text alignment model and evaluate retrieval")
    p.add_argument("--images", required=True)
    p.add_argument("--texts", required=True)
    p.add_argument("--format", choices=("binary", "csv"), default="binary")
    p.add_argument("--split", default=None)
    p.add_argument("--algo", choices=("np", "ls", "ns"), required=True)
    p.add_argument("--lambda", dest="lam", type=_nonneg_float, default=1.0)
    p.add_argument("--standardize", choices=("raw", "zscore", "auto"), default="raw")
    p.add_argument("--shared-dim", type=_positive_int, default=24)
    p.add_argument("--alpha", type=_positive_float, default=0.2)
    p.add_argument("--epochs", type=_positive_int, default=40)
    p.add_argument("--batch", type=_positive_int, default=64)
    p.add_argument("--lr", type=_positive_float, default=0.5)
    p.add_argument("--val-fraction", type=_fraction, default=0.1)
    p.add_argument("--patience", type=_positive_int, default=6)
    p.add_argument("--folds", type=_positive_int, default=None)
    p.add_argument("--group-by", default=None, help="id,group CSV for grouped cross-validation")
    p.add_argument("--p", type=_percent_list, default=(1.0, 5.0, 10.0))
    p.add_argument("--out-dir", required=True)
    common(p)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("eval", help="evaluate a saved alignment model")
    p.add_argument("--model", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--texts", required=True)
    p.add_argument("--format", choices=("binary", "csv"), default="binary")
    p.add_argument("--split", required=True)
    p.add_argument("--p", type=_percent_list, default=(1.0, 5.0, 10.0))
    p.add_argument("--out-dir", required=True)
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze", help="retrievability and correlation analytics")
    p.add_argument("--eval", required=True, help="per-instance eval.csv from align/eval")
    p.add_argument("--images", required=True)
    p.add_argument("--format", choices=("binary", "csv"), default="binary")
    p.add_argument("--split", required=True)
    p.add_argument("--concepts", default=None)
    p.add_argument("--topics", default=None)
    p.add_argument("--min-support", type=_positive_int, default=data.DEFAULT_MIN_SUPPORT)
    p.add_argument("--scores", required=True, help="scores.csv from score/topics-score")
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--bins", type=_positive_int, default=10)
    p.add_argument("--log-x", action="store_true")
    p.add_argument("--external", default=None, help="concept,score CSV to correlate against")
    p.add_argument("--out-dir", required=True)
    common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("synth", help="generate a seeded synthetic benchmark dataset")
    p.add_argument("--kind", choices=("benchmark", "linear"), default="benchmark")
    p.add_argument("--n", type=_positive_int, default=1800)
    p.add_argument("--d-img", type=_positive_int, default=16)
    p.add_argument("--d-txt", type=_positive_int, default=24)
    p.add_argument("--train-fraction", type=_fraction, default=0.8)
    p.add_argument("--clusters", type=_positive_int, default=12)
    p.add_argument("--bg-fraction", type=_fraction, default=0.2)
    p.add_argument("--sigma-min", type=_positive_float, default=0.7)
    p.add_argument("--sigma-max", type=_positive_float, default=4.0)
    p.add_argument("--noise-min", type=_positive_float, default=0.05)
    p.add_argument("--noise-max", type=_positive_float, default=0.05)
    p.add_argument("--corrupt-max", type=_nonneg_float, default=0.97)
    p.add_argument("--corrupt-power", type=_positive_float, default=3.0)
    p.add_argument("--uniform-words", type=_positive_int, default=6)
    p.add_argument("--latent-dim", type=_positive_int, default=6)
    p.add_argument("--micro-clusters", type=_positive_int, default=150)
    p.add_argument("--out-dir", required=True)
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", help="end-to-end pipeline over a dataset directory")
    p.add_argument("--data", required=True, help="directory with images.vcf, texts.vcf, concepts.jsonl, split.json")
    p.add_argument("--k", type=_positive_int, default=50)
    p.add_argument("--k-sweep", type=_int_list, default=(25, 50, 100))
    p.add_argument("--models", type=lambda t: tuple(t.split(",")), default=("np", "ls", "ns"))
    p.add_argument("--lambda", dest="lam", type=_nonneg_float, default=1.0)
    p.add_argument("--min-support", type=_positive_int, default=data.DEFAULT_MIN_SUPPORT)
    p.add_argument("--p", type=_percent_list, default=(1.0, 5.0, 10.0))
    p.add_argument("--bins", type=_positive_int, default=8)
    p.add_argument("--log-x", action="store_true")
    p.add_argument("--out-dir", required=True)
    common(p)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "models", None) is not None:
        bad = [m for m in args.models if m not in ("np", "ls", "ns")]
        if bad:
            parser.error(f"unknown model(s): {', '.join(bad)}")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    raise SystemExit(main())
