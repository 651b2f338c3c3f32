"""Command-line surface tying the modules into reproducible pipelines.

Configuration comes from an optional JSON file plus repeatable
``--set key=value`` overrides (flags beat file values). Commands that
produce artifacts write the fully resolved configuration next to them, so
a run can be replayed from its output directory alone.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

log = logging.getLogger(__name__)


def _parse_set(pairs: list[str]) -> dict:
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ValueError(f"--set expects key=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def _load_config(args) -> dict:
    config = {}
    path = getattr(args, "config", None)
    if path:
        config.update(json.loads(Path(path).read_text()))
    config.update(_parse_set(getattr(args, "set", None)))
    return config


def _write_resolved(out_dir: Path, payload: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _require(args, *names) -> None:
    missing = [n for n in names if getattr(args, n.replace("-", "_"), None) is None]
    if missing:
        raise ValueError(f"missing required flags: {', '.join('--' + n for n in missing)}")


# ---------------------------------------------------------------- corpus


def cmd_corpus_ingest(args) -> int:
    from dialogue_kt.corpus import save_canonical
    from dialogue_kt.corpus.io import ingest_dataset_with_report

    dialogues, report = ingest_dataset_with_report(
        args.input, args.format, split=args.split
    )
    save_canonical(dialogues, args.output)
    print(
        f"ingested {report.ingested}/{report.total_records} dialogues "
        f"({len(report.dropped)} dropped) -> {args.output}"
    )
    for record_id, reason in report.dropped:
        log.info("dropped %s: %s", record_id, reason)
    return 0


def cmd_corpus_stats(args) -> int:
    from dialogue_kt.corpus import dataset_statistics, load_canonical

    stats = dataset_statistics(load_canonical(args.input))
    print(json.dumps(stats.to_dict(), sort_keys=True, indent=2))
    return 0


def cmd_corpus_split(args) -> int:
    from dialogue_kt.corpus import load_canonical, make_splits

    dialogues = load_canonical(args.input)
    plan = make_splits(
        dialogues, fold_count=args.folds, val_fraction=args.val_fraction, seed=args.seed
    )
    plan.save(args.output)
    print(f"wrote {plan.fold_count}-fold split plan -> {args.output}")
    return 0


# ---------------------------------------------------------------- taxonomy


def cmd_taxonomy_validate(args) -> int:
    from dialogue_kt.taxonomy import load_taxonomy

    taxonomy = load_taxonomy(args.input)
    counts = {level: len(taxonomy.ids(level)) for level in ("domain", "cluster", "standard")}
    print(json.dumps({"valid": True, **counts}))
    return 0


def cmd_taxonomy_import(args) -> int:
    from dialogue_kt.taxonomy import import_coherence_map, save_taxonomy

    taxonomy = import_coherence_map(args.input)
    save_taxonomy(taxonomy, args.output)
    print(f"imported taxonomy -> {args.output}")
    return 0


# ---------------------------------------------------------------- annotate


def _build_client(args):
    from dialogue_kt.annotator import EndpointClient, ScriptedClient

    if args.fake_responses:
        return ScriptedClient(json.loads(Path(args.fake_responses).read_text()))
    if not args.endpoint:
        raise ValueError("need --endpoint (or --fake-responses for offline runs)")
    return EndpointClient(args.endpoint, args.model, api_key_env=args.api_key_env)


def cmd_annotate_run(args) -> int:
    from dialogue_kt.annotator import AnnotationConfig, annotate_corpus
    from dialogue_kt.corpus import load_canonical
    from dialogue_kt.taxonomy import load_taxonomy

    _require(args, "corpus", "out")
    dialogues = load_canonical(args.corpus)
    taxonomy = load_taxonomy(args.taxonomy) if args.taxonomy else None
    tasks = tuple(args.tasks.split(",")) if args.tasks else ("correctness", "kcs")
    config = AnnotationConfig(
        model=args.model,
        tasks=tasks,
        parallelism=args.parallelism,
        cache_dir=args.cache_dir,
    )
    client = _build_client(args)
    results, summary = annotate_corpus(dialogues, client, taxonomy, config)

    out_dir = Path(args.out)
    _write_resolved(
        out_dir,
        {
            "command": "annotate",
            "corpus": str(args.corpus),
            "taxonomy": str(args.taxonomy),
            "model": config.model,
            "tasks": list(tasks),
            "parallelism": config.parallelism,
            "cache_dir": config.cache_dir,
            "prompt_version": config.prompt_version,
        },
    )
    with (out_dir / "results.jsonl").open("w") as fh:
        for result in results:
            fh.write(json.dumps(result.to_dict(), sort_keys=True) + "\n")
    (out_dir / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    print(
        f"annotated {summary['succeeded']}/{summary['total']} dialogues "
        f"({summary['failed']} failed, {summary['cache_hits']} cache hits)"
    )
    return 0


def cmd_annotate_export(args) -> int:
    from dialogue_kt.annotator import AnnotationResult, apply_annotations
    from dialogue_kt.corpus import load_canonical, save_canonical
    from dialogue_kt.taxonomy import load_taxonomy

    dialogues = load_canonical(args.corpus)
    results = [
        AnnotationResult.from_dict(json.loads(line))
        for line in Path(args.results).read_text().splitlines()
        if line.strip()
    ]
    taxonomy = load_taxonomy(args.taxonomy) if args.taxonomy else None
    exported = apply_annotations(dialogues, results, taxonomy)
    save_canonical(exported, args.output)
    print(f"exported {len(exported)}/{len(dialogues)} dialogues -> {args.output}")
    return 0


# ---------------------------------------------------------------- train


def cmd_train(args) -> int:
    import torch

    from dialogue_kt.corpus import SplitPlan, load_canonical

    dialogues = load_canonical(args.corpus)
    plan = SplitPlan.load(args.splits)
    config = _load_config(args)
    out_dir = Path(args.out)
    fold = args.fold

    train = plan.select(dialogues, fold, "train")
    val = plan.select(dialogues, fold, "val")
    if not train:
        raise ValueError(f"fold {fold} has no train dialogues")

    _write_resolved(
        out_dir,
        {
            "command": f"train {args.method}",
            "corpus": str(args.corpus),
            "splits": str(args.splits),
            "fold": fold,
            "seed": args.seed,
            "config": config,
        },
    )

    if args.method == "bkt":
        from dialogue_kt.bkt import BKTFitConfig, bkt_fit
        from dialogue_kt.kt_core import expand_pseudo_turns

        fit_config = BKTFitConfig(
            max_iter=int(config.get("max_iter", 100)),
            tol=float(config.get("tol", 1e-4)),
            restarts=int(config.get("restarts", 5)),
            seed=args.seed,
        )
        turns = [pt for d in train for pt in expand_pseudo_turns(d)]
        params = bkt_fit(turns, fit_config)
        params.save(out_dir / "params.json")
        print(f"fit {len(params.per_kc)} KC parameter sets -> {out_dir / 'params.json'}")
    elif args.method in ("dkt", "dkt-sem"):
        from dialogue_kt.dkt_sem.train import train_dkt_sem

        if args.method == "dkt":
            config["use_text"] = False
        predictor = train_dkt_sem(train, val, config, seed=args.seed)
        torch.save(predictor.model.state_dict(), out_dir / "checkpoint.pt")
        (out_dir / "kc_index.json").write_text(
            json.dumps(predictor.kc_index, sort_keys=True, indent=2) + "\n"
        )
        (out_dir / "training_log.json").write_text(
            json.dumps(predictor.training_log, indent=2) + "\n"
        )
        print(f"trained {args.method} -> {out_dir / 'checkpoint.pt'}")
    elif args.method == "llmkt":
        from dialogue_kt.llmkt.train import train_llmkt

        predictor = train_llmkt(train, val, config, seed=args.seed)
        adapters = {
            name: p for name, p in predictor.lm.state_dict().items() if "lora_" in name
        }
        torch.save(adapters, out_dir / "adapters.pt")
        (out_dir / "training_log.json").write_text(
            json.dumps(predictor.training_log, indent=2) + "\n"
        )
        print(f"trained llmkt adapters -> {out_dir / 'adapters.pt'}")
    else:
        raise ValueError(f"unknown method {args.method!r}")
    return 0


# ---------------------------------------------------------------- eval


def cmd_eval_run(args) -> int:
    from dialogue_kt.corpus import SplitPlan, load_canonical
    from dialogue_kt.eval import run_experiment

    dialogues = load_canonical(args.corpus)
    plan = SplitPlan.load(args.splits)
    config = _load_config(args)
    if getattr(args, "zero_shot", False):
        config["zero_shot"] = True
    summary, artifact = run_experiment(
        args.method, dialogues, plan, config, out_dir=args.out, seed=args.seed
    )
    print(json.dumps(summary, sort_keys=True, indent=2))
    if not artifact.complete:
        raise RuntimeError(
            f"{len(summary['incomplete_folds'])} fold(s) failed: "
            f"{summary['fold_errors']}"
        )
    return 0


def cmd_eval_curves(args) -> int:
    from dialogue_kt.eval import knowledge_curves, plot_curves
    from dialogue_kt.kt_core import load_records

    records = load_records(args.records)
    series = knowledge_curves(records, top_n=args.top)
    out_dir = Path(args.out)
    written = plot_curves(series, out_dir)
    _write_resolved(
        out_dir / "meta",
        {"command": "curves", "records": str(args.records), "top": args.top},
    )
    print(f"wrote {len(written)} plot files for {len(series)} KCs -> {out_dir}")
    return 0


def cmd_eval_irr(args) -> int:
    from dialogue_kt.eval import RatingMatrix, irr_metrics

    matrix = RatingMatrix.load(args.ratings)
    print(json.dumps(irr_metrics(matrix, level=args.level), sort_keys=True, indent=2))
    return 0


# ---------------------------------------------------------------- wiring


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override a config value (JSON-parsed; repeatable)",
    )
    parser.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dialogue-kt",
        description="Knowledge tracing over annotated tutoring dialogues.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    # corpus
    corpus = sub.add_parser("corpus", help="ingest, inspect, and split corpora")
    corpus_sub = corpus.add_subparsers(dest="corpus_cmd", required=True)
    p = corpus_sub.add_parser("ingest", help="convert a source dataset to canonical JSON")
    p.add_argument("--format", required=True, choices=["comta", "mathdial"])
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--split", default=None, help="split tag stored in dialogue meta")
    p.set_defaults(func=cmd_corpus_ingest)
    p = corpus_sub.add_parser("stats", help="dataset statistics")
    p.add_argument("--in", dest="input", required=True)
    p.set_defaults(func=cmd_corpus_stats)
    p = corpus_sub.add_parser("split", help="build a cross-validation split plan")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--folds", type=int, required=True)
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_corpus_split)

    # taxonomy
    taxonomy = sub.add_parser("taxonomy", help="validate or import KC taxonomies")
    taxonomy_sub = taxonomy.add_subparsers(dest="taxonomy_cmd", required=True)
    p = taxonomy_sub.add_parser("validate", help="check structural integrity")
    p.add_argument("--in", dest="input", required=True)
    p.set_defaults(func=cmd_taxonomy_validate)
    p = taxonomy_sub.add_parser("import", help="convert a nested domain map")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.set_defaults(func=cmd_taxonomy_import)

    # annotate (bare = run; `annotate export` = merge results into a corpus)
    annotate = sub.add_parser("annotate", help="LLM annotation over a corpus")
    annotate.add_argument("--corpus")
    annotate.add_argument("--taxonomy")
    annotate.add_argument("--model", default="unspecified-model")
    annotate.add_argument("--parallelism", type=int, default=1)
    annotate.add_argument("--cache-dir", dest="cache_dir")
    annotate.add_argument("--endpoint", help="chat-completions base URL")
    annotate.add_argument("--api-key-env", default="OPENAI_API_KEY")
    annotate.add_argument("--fake-responses", help="JSON list of canned responses")
    annotate.add_argument("--tasks", help="comma list: correctness,kcs")
    annotate.add_argument("--out")
    annotate.set_defaults(func=cmd_annotate_run)
    annotate_sub = annotate.add_subparsers(dest="annotate_cmd")
    p = annotate_sub.add_parser("export", help="apply annotation results to a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--results", required=True, help="results.jsonl from an annotate run")
    p.add_argument("--taxonomy")
    p.add_argument("--out", dest="output", required=True)
    p.add_argument(
        "--only-successful",
        action="store_true",
        default=True,
        help="failed dialogues are always dropped; flag kept for clarity",
    )
    p.set_defaults(func=cmd_annotate_export)

    # train
    train = sub.add_parser("train", help="fit one method on one fold")
    train.add_argument("method", choices=["bkt", "dkt", "dkt-sem", "llmkt"])
    train.add_argument("--corpus", required=True)
    train.add_argument("--splits", required=True)
    train.add_argument("--fold", type=int, default=0)
    train.add_argument("--out", required=True)
    _add_config_flags(train)
    train.set_defaults(func=cmd_train)

    # eval
    ev = sub.add_parser("eval", help="run experiments, curves, reliability")
    ev_sub = ev.add_subparsers(dest="eval_cmd", required=True)
    p = ev_sub.add_parser("run", help="cross-validated evaluation of a method")
    p.add_argument("--method", required=True, choices=["majority", "bkt", "dkt", "dkt-sem", "llmkt"])
    p.add_argument("--corpus", required=True)
    p.add_argument("--splits", required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_eval_run)
    for method in ("bkt", "llmkt"):
        p = ev_sub.add_parser(method, help=f"shorthand for eval run --method {method}")
        p.add_argument("--corpus", required=True)
        p.add_argument("--splits", required=True)
        p.add_argument("--out", required=True)
        if method == "llmkt":
            p.add_argument("--zero-shot", action="store_true", dest="zero_shot")
        _add_config_flags(p)
        p.set_defaults(func=cmd_eval_run, method=method)
    p = ev_sub.add_parser("curves", help="knowledge-change curves from records")
    p.add_argument("--records", required=True)
    p.add_argument("--top", type=int, default=15)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval_curves)
    p = ev_sub.add_parser("irr", help="inter-rater reliability metrics")
    p.add_argument("--ratings", required=True)
    p.add_argument("--level", choices=["nominal", "ordinal"], default="nominal")
    p.set_defaults(func=cmd_eval_irr)

    # top-level shortcuts
    p = sub.add_parser("curves", help="knowledge-change curves from records")
    p.add_argument("--records", required=True)
    p.add_argument("--top", type=int, default=15)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval_curves)
    p = sub.add_parser("irr", help="inter-rater reliability metrics")
    p.add_argument("--ratings", required=True)
    p.add_argument("--level", choices=["nominal", "ordinal"], default="nominal")
    p.set_defaults(func=cmd_eval_irr)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse handles --help and usage errors
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return int(args.func(args) or 0)
    except Exception as exc:
        message = " ".join(str(exc).split())
        print(f"error: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
