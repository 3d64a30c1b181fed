"""Pipeline command line: ingest -> build-graphs -> stats -> featurize ->
train -> evaluate -> compare -> trend.

Each command consumes the previous stage's on-disk artifacts. Failures exit
nonzero with a machine-readable JSON error on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import evaluation, features, graphs, ingest, models, training
from .errors import SegnnError, StageArtifactError
from .features import FeatureMode, HashingEmbedder, load_precomputed
from .models import MODEL_KINDS


def _require(path: Path, produced_by: str) -> Path:
    if not path.exists():
        raise StageArtifactError(str(path), produced_by)
    return path


def _write_json(path, payload: dict):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# --- ingest -----------------------------------------------------------------


def cmd_ingest(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    posts = ingest.parse_posts(_require(Path(args.posts), "ingest --posts"))
    comments = ingest.parse_comments(_require(Path(args.comments), "ingest --comments"))
    users = ingest.parse_users(_require(Path(args.users), "ingest --users"))
    ingest.posts_to_jsonl(out / "posts.jsonl", posts.records)
    ingest.comments_to_jsonl(out / "comments.jsonl", comments.records)
    ingest.users_to_jsonl(out / "users.jsonl", users.records)
    report = ingest.ingestion_report(posts, comments, users)
    report["community"] = args.community
    report["seed"] = args.seed
    _write_json(out / "ingest_report.json", report)
    counts = report["counts"]
    print(
        f"ingested {counts['questions']} questions, {counts['answers']} answers, "
        f"{counts['comments']} comments, {counts['users']} users "
        f"({report['pct_resolved']:.1%} resolved)"
    )
    return 0


def _load_ingested(ingested: Path):
    posts = ingest.posts_from_jsonl(_require(ingested / "posts.jsonl", "ingest"))
    comments = ingest.comments_from_jsonl(
        _require(ingested / "comments.jsonl", "ingest")
    )
    users = ingest.users_from_jsonl(_require(ingested / "users.jsonl", "ingest"))
    return posts, comments, users


# --- build-graphs -----------------------------------------------------------


def cmd_build_graphs(args) -> int:
    ingested = Path(args.ingested)
    posts, comments, users = _load_ingested(ingested)
    community = args.community
    report_path = ingested / "ingest_report.json"
    if community is None and report_path.exists():
        with open(report_path, encoding="utf-8") as fh:
            community = json.load(fh).get("community")
    built, report = graphs.build_corpus(posts, comments, users)
    violations = []
    for g in built:
        for v in graphs.validate_schema(g):
            violations.append(f"question {g.question_id}: {v}")
    manifest = graphs.write_corpus(args.out, built, community=community or "unknown")
    _write_json(
        Path(args.out) / "build_report.json",
        {
            "graphs": report.graphs,
            "resolved": report.resolved,
            "unresolved": report.unresolved,
            "counters": asdict(report.counters),
            "schema_violations": violations,
            "seed": args.seed,
        },
    )
    if violations:
        raise SegnnError(
            f"{len(violations)} schema violations in built graphs: {violations[:3]}"
        )
    print(
        f"built {manifest['graph_count']} graphs "
        f"({manifest['label_counts']['resolved']} resolved / "
        f"{manifest['label_counts']['unresolved']} unresolved)"
    )
    return 0


# --- stats -------------------------------------------------------------------


def cmd_stats(args) -> int:
    corpus = graphs.load_corpus(args.corpus)
    table = evaluation.graph_statistics(corpus)
    print(table.format_table())
    if args.json:
        _write_json(args.json, {"stats": table.to_dict(), "seed": args.seed})
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write("characteristic,stat,value\n")
            for name, row in table.rows.items():
                for stat, value in row.to_dict().items():
                    fh.write(f"{name},{stat},{value!r}\n")
    return 0


# --- featurize ---------------------------------------------------------------


def _corpus_node_records(corpus):
    """Unique (key, text) pairs over the corpus, in first-seen order."""
    seen = set()
    for g in corpus:
        for node in g.graph.nodes:
            key = features.node_key(node.label, node.props["id"])
            if key not in seen:
                seen.add(key)
                yield key, node.props["text"]


def cmd_featurize(args) -> int:
    corpus = graphs.load_corpus(args.corpus)
    pairs = list(_corpus_node_records(corpus))
    dim = args.dim
    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            vectors = list(
                pool.map(lambda p: features.hash_embed(p[1], dim), pairs, chunksize=256)
            )
    else:
        vectors = [features.hash_embed(text, dim) for _, text in pairs]
    records = [
        (key, vec.astype(np.float32)) for (key, _), vec in zip(pairs, vectors)
    ]
    features.write_embeddings(args.out, dim, records)
    print(f"wrote {len(records)} embeddings (d={dim}) to {args.out}")
    return 0


# --- shared model/data plumbing -----------------------------------------------

# knobs settable from a JSON config file; explicit CLI flags win over the file,
# the file wins over these defaults
_CONFIG_DEFAULTS = {
    "model": None,
    "methods": None,
    "features": "text+type",
    "embeddings": None,
    "dim": 384,
    "epochs": 400,
    "batch_size": 32,
    "learning_rate": 1e-3,
    "width": None,
    "depth": None,
    "seed": 0,
    "k": 5,
}


def _settings(args) -> dict:
    file_config = {}
    if getattr(args, "config", None):
        config_path = Path(args.config)
        if not config_path.exists():
            raise SegnnError(f"config file not found: {config_path}")
        with open(config_path, encoding="utf-8") as fh:
            file_config = json.load(fh)
        unknown = set(file_config) - set(_CONFIG_DEFAULTS)
        if unknown:
            raise SegnnError(
                f"unknown config keys {sorted(unknown)}; "
                f"expected a subset of {sorted(_CONFIG_DEFAULTS)}"
            )
    resolved = {}
    for key, default in _CONFIG_DEFAULTS.items():
        flag = getattr(args, key, None)
        if flag is not None:
            resolved[key] = flag
        elif key in file_config:
            resolved[key] = file_config[key]
        else:
            resolved[key] = default
    return resolved


def _provider(settings: dict):
    if settings["embeddings"]:
        return load_precomputed(_require(Path(settings["embeddings"]), "featurize"))
    return HashingEmbedder(settings["dim"])


def _question_embeddings(corpus, provider) -> np.ndarray:
    rows = []
    for g in corpus:
        q = g.graph.nodes[0]
        key = features.node_key(q.label, q.props["id"])
        rows.append(np.asarray(provider.vector_for(key, q.props["text"])))
    return np.stack(rows)


def _gnn_options(settings: dict) -> dict:
    overrides = {}
    if settings["width"] is not None:
        overrides["width"] = settings["width"]
    if settings["depth"] is not None:
        overrides["depth"] = settings["depth"]
    return {
        "epochs": settings["epochs"],
        "batch_size": settings["batch_size"],
        "learning_rate": settings["learning_rate"],
        "arch_overrides": overrides,
    }


def _parse_method(spec: str, gnn_opts: dict):
    spec = spec.strip()
    if spec == "logreg":
        return evaluation.LogRegMethod()
    if spec == "majority":
        return evaluation.MajorityMethod()
    if spec.startswith("fewshot"):
        try:
            shots = int(spec[len("fewshot") :])
        except ValueError:
            raise SegnnError(f"bad few-shot method spec {spec!r}; try fewshot5")
        return evaluation.FewShotMethod(shots)
    arch, _, mode_str = spec.partition(":")
    if arch in MODEL_KINDS:
        mode = FeatureMode.parse(mode_str) if mode_str else FeatureMode.TEXT_PLUS_TYPE
        opts = dict(gnn_opts)
        overrides = opts.pop("arch_overrides")
        if arch == "gcn":
            overrides = {k: v for k, v in overrides.items() if k not in ("width", "depth")}
        return evaluation.GnnMethod(arch, mode, arch_overrides=overrides, **opts)
    raise SegnnError(
        f"unknown method spec {spec!r}; expected gcn:MODE, ggnn:MODE, "
        "logreg, majority, or fewshotN"
    )


def _prepare_eval_data(corpus, methods, settings: dict) -> evaluation.EvalData:
    labels = np.array([1 if g.unresolved else 0 for g in corpus])
    data = evaluation.EvalData(
        labels=labels,
        question_ids=np.array([g.question_id for g in corpus], dtype=np.int64),
    )
    modes = {m.mode for m in methods if isinstance(m, evaluation.GnnMethod)}
    needs_text = any(
        isinstance(m, (evaluation.LogRegMethod, evaluation.FewShotMethod))
        for m in methods
    ) or any(mode is not FeatureMode.TYPE_ONLY for mode in modes)
    provider = _provider(settings) if needs_text else None
    for mode in modes:
        data.graph_data[mode] = training.prepare_graph_dataset(corpus, mode, provider)
    if needs_text:
        data.question_embeddings = _question_embeddings(corpus, provider)
    return data


# --- train ---------------------------------------------------------------------


def cmd_train(args) -> int:
    settings = _settings(args)
    if settings["model"] is None:
        raise SegnnError("no model selected; pass --model or set it in --config")
    corpus = graphs.load_corpus(args.corpus)
    mode = FeatureMode.parse(settings["features"])
    provider = _provider(settings) if mode is not FeatureMode.TYPE_ONLY else None
    ds = training.prepare_graph_dataset(corpus, mode, provider)
    overrides = _gnn_options(settings)["arch_overrides"]
    if settings["model"] == "gcn":
        overrides = {}
    config = training.TrainConfig(
        epochs=settings["epochs"],
        batch_size=settings["batch_size"],
        learning_rate=settings["learning_rate"],
        seed=settings["seed"],
        feature_mode=mode,
        architecture=settings["model"],
        arch_overrides=overrides,
    )
    model, log = training.train(ds, config)
    models.save_checkpoint(model, args.out, seed=settings["seed"], epoch=config.epochs)
    if args.log:
        log.to_csv(args.log)
    final = log.entries[-1] if log.entries else None
    if final:
        print(
            f"trained {settings['model']} for {config.epochs} epochs: "
            f"loss {final.loss:.4f}, train accuracy {final.train_accuracy:.3f}"
        )
    else:
        print("epochs=0: wrote the initialization unchanged")
    print(f"checkpoint: {args.out}")
    return 0


# --- evaluate --------------------------------------------------------------------


def _method_filename(name: str) -> str:
    return name.replace(":", "_").replace("+", "-")


def cmd_evaluate(args) -> int:
    settings = _settings(args)
    if settings["methods"] is None:
        raise SegnnError("no methods selected; pass --methods or set it in --config")
    corpus = graphs.load_corpus(args.corpus)
    gnn_opts = _gnn_options(settings)
    methods = [_parse_method(s, gnn_opts) for s in settings["methods"].split(",")]
    data = _prepare_eval_data(corpus, methods, settings)
    reports, predictions = evaluation.run_cv(
        methods, data, k=settings["k"], seed=settings["seed"]
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    evaluation.write_report_csv(out / "report.csv", reports)
    evaluation.write_report_json(
        out / "report.json",
        reports,
        meta={
            "seed": settings["seed"],
            "k": settings["k"],
            "epochs": settings["epochs"],
        },
    )
    for name, rows in predictions.items():
        evaluation.write_predictions_csv(
            out / f"predictions_{_method_filename(name)}.csv", rows
        )
    for name in sorted(reports):
        r = reports[name]
        print(
            f"{name}: accuracy {r.mean('accuracy'):.3f} ({r.std('accuracy'):.3f}) "
            f"f1 {r.mean('f1'):.3f} ({r.std('f1'):.3f})"
        )
    print(f"reports in {out}")
    return 0


# --- compare ---------------------------------------------------------------------


def cmd_compare(args) -> int:
    settings = _settings(args)
    corpus = graphs.load_corpus(args.corpus)
    gnn_opts = _gnn_options(settings)
    method_a = _parse_method(args.a, gnn_opts)
    method_b = _parse_method(args.b, gnn_opts)
    data = _prepare_eval_data(corpus, [method_a, method_b], settings)
    result = evaluation.five_by_two_cv_test(
        method_a, method_b, data, seed=settings["seed"]
    )
    payload = result.to_dict()
    payload.update(
        {"method_a": method_a.name, "method_b": method_b.name, "seed": settings["seed"]}
    )
    if args.out:
        _write_json(args.out, payload)
    verdict = (
        "degenerate (identical performance)"
        if result.degenerate
        else f"t={result.t_statistic:.4f}, p={result.p_value:.6f}, "
        f"{'significant' if result.significant else 'not significant'} at 0.005"
    )
    print(f"{method_a.name} vs {method_b.name}: {verdict}")
    return 0


# --- trend -----------------------------------------------------------------------


def cmd_trend(args) -> int:
    posts = ingest.posts_from_jsonl(
        _require(Path(args.ingested) / "posts.jsonl", "ingest")
    )
    series = evaluation.resolved_trend(posts)
    evaluation.write_trend_csv(args.out, series)
    if len(series) >= 2:
        rho = evaluation.spearman_rho(
            [y for y, _ in series], [s for _, s in series]
        )
        direction = "decreasing" if rho < 0 else "not decreasing"
        print(f"{len(series)} years, spearman rho {rho:.3f} ({direction})")
    else:
        print(f"{len(series)} year(s) in series")
    print(f"trend written to {args.out}")
    return 0


# --- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segnn",
        description=(
            "Stack Exchange communication graphs: ingest dumps, build "
            "per-question property graphs, train GNN/baseline classifiers to "
            "detect unresolved questions, and evaluate them"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_seed(p):
        p.add_argument("--seed", type=int, default=0, help="root RNG seed (recorded in outputs)")

    p = sub.add_parser("ingest", help="parse Posts/Comments/Users XML into stage records")
    p.add_argument("--posts", required=True, help="Posts.xml path")
    p.add_argument("--comments", required=True, help="Comments.xml path")
    p.add_argument("--users", required=True, help="Users.xml path")
    p.add_argument("--out", required=True, help="output directory for stage records")
    p.add_argument("--community", default="unknown", help="community name for reports")
    add_seed(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("build-graphs", help="build one communication graph per question")
    p.add_argument("--ingested", required=True, help="directory written by ingest")
    p.add_argument("--out", required=True, help="graph corpus output directory")
    p.add_argument("--community", default=None)
    add_seed(p)
    p.set_defaults(func=cmd_build_graphs)

    p = sub.add_parser("stats", help="print the corpus graph-statistics table")
    p.add_argument("--corpus", required=True, help="graph corpus directory")
    p.add_argument("--json", default=None, help="also write the table as JSON")
    p.add_argument("--csv", default=None, help="also write the table as CSV")
    add_seed(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("featurize", help="hash-embed all node texts into an SEEMB1 file")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="embedding file path")
    p.add_argument("--dim", type=int, default=384, help="embedding dimension")
    p.add_argument("--jobs", type=int, default=1, help="worker threads")
    add_seed(p)
    p.set_defaults(func=cmd_featurize)

    def add_model_opts(p, with_model=True):
        p.add_argument(
            "--config",
            default=None,
            help="JSON config file mirroring the training knobs; explicit flags win",
        )
        if with_model:
            p.add_argument("--model", choices=MODEL_KINDS, default=None)
            p.add_argument(
                "--features",
                default=None,
                help="feature mode: text+type, text, or type (default text+type)",
            )
        p.add_argument("--embeddings", default=None, help="precomputed SEEMB1 file")
        p.add_argument(
            "--dim",
            type=int,
            default=None,
            help="hash embedder dimension when no --embeddings (default 384)",
        )
        p.add_argument("--epochs", type=int, default=None, help="default 400")
        p.add_argument("--batch-size", type=int, default=None, help="default 32")
        p.add_argument("--learning-rate", type=float, default=None, help="default 1e-3")
        p.add_argument("--width", type=int, default=None, help="GGNN hidden width")
        p.add_argument("--depth", type=int, default=None, help="GGNN GenConv layers")
        p.add_argument(
            "--seed", type=int, default=None, help="root RNG seed (default 0)"
        )

    p = sub.add_parser("train", help="train one model on the full corpus")
    p.add_argument("--corpus", required=True)
    add_model_opts(p)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", default=None, help="training log CSV path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="stratified k-fold CV of one or more methods")
    p.add_argument("--corpus", required=True)
    p.add_argument(
        "--methods",
        default=None,
        help="comma-separated: gcn:MODE, ggnn:MODE, logreg, majority, fewshotN",
    )
    p.add_argument("--k", type=int, default=None, help="folds (default 5)")
    add_model_opts(p, with_model=False)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="5x2cv paired t-test between two methods")
    p.add_argument("--corpus", required=True)
    p.add_argument("--a", required=True, help="first method spec")
    p.add_argument("--b", required=True, help="second method spec")
    add_model_opts(p, with_model=False)
    p.add_argument("--out", default=None, help="result JSON path")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("trend", help="per-year resolved-share series")
    p.add_argument("--ingested", required=True, help="directory written by ingest")
    p.add_argument("--out", required=True, help="trend CSV path")
    add_seed(p)
    p.set_defaults(func=cmd_trend)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SegnnError, FileNotFoundError) as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 2


if __name__ == "__main__":
    sys.exit(main())
