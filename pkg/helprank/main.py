"""
Command-line entry point for helprank.

Run from this directory:

    python main.py prepare --input books.json.gz --category Books --out prepared/books
    python main.py train --task t1 --model rcnn --data prepared/books --out runs/t1
    python main.py compare runs/t1/report.json runs/t2/report.json

Every command that writes artifacts also writes a manifest.json next to them.
Exit status: 0 on success, 1 on a domain or I/O error (JSON on standard error),
2 on a usage error.
"""

import argparse
import contextlib
import itertools
import json
import logging
import os
import sys
from dataclasses import asdict, replace

from config import (LABELED_PER_CLASS, MODEL_KINDS, UNLABELED_PER_CATEGORY, VERSION, SplitSpec,
                    derive_seed, load_config, normalize_category, resolve_seed, seed_override)
from data_loader import RunManifest, iter_records, load_all_prepared, load_pool, load_prepared, save_prepared
from embeddings import export_text, load_table, nearest_neighbors, save_table
from errors import HelprankError
from classifiers import is_low_confidence, load_model, predict
from parameter_validator import (merge_results, print_validation_results, validate_label_config,
                                 validate_skipgram_config, validate_split_spec, validate_train_config)
from review_corpus import build_labeled_set, build_unlabeled_pool, corpus_stats, print_corpus_stats, split_dataset
from text_pipeline import Tokenizer, Vocabulary
from train_eval import (ExperimentReport, build_embedding_table, compare_reports, encode_split, evaluate,
                        model_comparison_table, print_comparison, print_experiment_summary,
                        reference_reports, run_experiment_t1, run_experiment_t2, run_model_comparison,
                        table_oov_lookup)
from visualization import (plot_accuracy_comparison, plot_model_comparison, plot_validation_curves,
                           plot_voting_distribution)

logger = logging.getLogger("helprank")


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _common(p, seed=True, config=True):
    p.add_argument("--json", action="store_true", help="write machine-readable JSON to standard output")
    p.add_argument("--verbose", "-v", action="store_true", help="debug logging on standard error")
    if seed:
        p.add_argument("--seed", type=int, default=None, help="master seed (fallback: HELPRANK_SEED, then 0)")
    if config:
        p.add_argument("--config", default=None, help="JSON or key = value config file")


def build_parser():
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="helprank", formatter_class=fmt,
                                     description="Review helpfulness prediction with RCNN and baselines.")
    parser.add_argument("--version", action="version", version=f"helprank {VERSION}")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("prepare", formatter_class=fmt,
                       help="label, balance and split a review corpus; sample the unlabeled pool")
    p.add_argument("--input", nargs="+", required=True, help="JSON-lines review files (.gz allowed)")
    p.add_argument("--category", default="Other", help="category of the input reviews")
    p.add_argument("--per-class", type=int, default=LABELED_PER_CLASS, help="labeled examples per class")
    p.add_argument("--unlabeled", type=int, default=UNLABELED_PER_CATEGORY, help="zero-vote pool size")
    p.add_argument("--test-frac", type=float, default=0.10, help="test share per class")
    p.add_argument("--val-frac", type=float, default=0.15, help="validation share of the non-test part")
    p.add_argument("--use-summary", action="store_true", help="prepend the review summary to the text")
    p.add_argument("--skip-bad-lines", action="store_true", help="log and skip malformed lines")
    p.add_argument("--jobs", type=int, default=1, help="labeling worker processes")
    p.add_argument("--out", required=True, help="output directory")
    _common(p)

    p = sub.add_parser("stats", formatter_class=fmt, help="voting distribution of a review corpus")
    p.add_argument("--input", nargs="+", required=True, help="JSON-lines review files (.gz allowed)")
    p.add_argument("--category", default="Other", help="category of the input reviews")
    p.add_argument("--skip-bad-lines", action="store_true", help="log and skip malformed lines")
    p.add_argument("--plot", default=None, help="save a bar chart to this path")
    _common(p, seed=False, config=False)

    p = sub.add_parser("embed", formatter_class=fmt, help="train a skip-gram subword embedding table")
    p.add_argument("--labeled", "--data", dest="labeled", required=True,
                   help="prepared category directory; its train and validation texts are used")
    p.add_argument("--unlabeled", default=None,
                   help="prepared directory or unlabeled.jsonl with the pool (default: the --labeled pool)")
    p.add_argument("--out", required=True, help="output table path")
    p.add_argument("--dim", type=int, default=None, help="vector size (default 300)")
    p.add_argument("--epochs", type=int, default=None, help="passes over the corpus (default 5)")
    p.add_argument("--min-count", type=int, default=None, help="minimum word frequency (default 5)")
    p.add_argument("--bucket-count", type=int, default=None,
                   help="hashed subword rows (default 2**18; at dim 300 the float32 subword matrix "
                        "takes about 315 MB, so lower this for small corpora)")
    p.add_argument("--export-text", default=None, help="also write a text vector file")
    p.add_argument("--neighbors", default=None, help="print nearest neighbors of this word")
    _common(p)

    p = sub.add_parser("train", formatter_class=fmt, help="run a t1 or t2 experiment")
    p.add_argument("--task", choices=["t1", "t2"], default="t1", help="supervised or semi-supervised setup")
    p.add_argument("--model", choices=MODEL_KINDS + ["all"], default="rcnn",
                   help="classifier kind; 'all' runs the t1 classifier comparison")
    p.add_argument("--data", nargs="+", required=True, help="prepared category directories")
    p.add_argument("--embeddings", default=None, help="pre-trained table for t2 (trained from the pool otherwise)")
    p.add_argument("--out", required=True, help="output directory for report, checkpoints and manifest")
    p.add_argument("--epochs", type=int, default=None, help="training epochs (default 10)")
    p.add_argument("--batch-size", type=int, default=None, help="batch size (default 128)")
    p.add_argument("--learning-rate", type=float, default=None, help="Adam learning rate (default 1e-3)")
    p.add_argument("--embed-dim", type=int, default=None, help="look-up table width (t1 256, t2 300)")
    p.add_argument("--rnn-hidden", type=int, default=None, help="recurrent context size (t1 256, t2 300)")
    p.add_argument("--fc-hidden", type=int, default=None, help="latent layer size (t1 256, t2 300)")
    p.add_argument("--max-len", type=int, default=None, help="token limit per review (default 500)")
    p.add_argument("--min-count", type=int, default=None, help="vocabulary frequency cut-off (default 5)")
    p.add_argument("--dtype", choices=["float32", "float64"], default=None, help="parameter precision")
    p.add_argument("--plot", default=None, help="save validation curves (or model comparison) to this path")
    _common(p)

    p = sub.add_parser("eval", formatter_class=fmt, help="evaluate a checkpoint on a prepared test split")
    p.add_argument("--model", required=True, help="classifier checkpoint")
    p.add_argument("--data", required=True, help="prepared category directory")
    p.add_argument("--embeddings", default=None, help="skip-gram table for out-of-vocabulary words")
    _common(p, seed=False, config=False)

    p = sub.add_parser("predict", formatter_class=fmt, help="classify review texts")
    p.add_argument("--model", required=True, help="classifier checkpoint")
    p.add_argument("--vocab", default=None, help="vocabulary file (default: the one stored next to the checkpoint)")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--text", help="a single review text")
    group.add_argument("--input", help="file with one review text per line")
    p.add_argument("--embeddings", default=None, help="skip-gram table for out-of-vocabulary words")
    _common(p, seed=False, config=False)

    p = sub.add_parser("compare", formatter_class=fmt, help="accuracy deltas between two reports")
    p.add_argument("reports", nargs="*", help="report_a.json report_b.json")
    p.add_argument("--reference", action="store_true", help="compare the published t1 and t2 accuracies")
    p.add_argument("--plot", default=None, help="save a grouped bar chart to this path")
    _common(p, seed=False, config=False)

    p = sub.add_parser("validate", formatter_class=fmt, help="check a configuration before a run")
    p.add_argument("--task", choices=["t1", "t2"], default="t1", help="task whose defaults are checked")
    p.add_argument("--section", choices=["train", "label", "split", "skipgram"], default="train",
                   help="config section the file holds")
    p.add_argument("--n-train", type=int, default=None, help="training examples available")
    _common(p, seed=False)

    return parser


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _records(paths, category, strict, skipped):
    return itertools.chain.from_iterable(
        iter_records(path, category=category, strict=strict, skipped=skipped) for path in paths)


def cmd_prepare(args, parser):
    seed = resolve_seed(args.seed)
    category = normalize_category(args.category)
    label_cfg = load_config(args.config, {"use_summary": args.use_summary or None}, section="label")
    spec = SplitSpec(train_frac=1.0 - args.test_frac, test_frac=args.test_frac,
                     val_frac_of_train=args.val_frac, seed=derive_seed(seed, "split"))
    manifest = RunManifest.start("prepare", {"label": asdict(label_cfg), "split": asdict(spec),
                                             "per_class": args.per_class, "unlabeled": args.unlabeled}, seed)
    for path in args.input:
        manifest.add_input(path)
    tokenizer = Tokenizer()
    skipped = {}
    strict = not args.skip_bad_lines

    dataset = build_labeled_set(_records(args.input, category, strict, skipped), args.per_class, label_cfg,
                                seed=derive_seed(seed, "labeled"), tokenizer=tokenizer, jobs=args.jobs,
                                category=category)
    splits = split_dataset(dataset, spec)
    pool = None
    if args.unlabeled > 0:
        keys = {ex.record.key for ex in dataset.examples}
        pool = build_unlabeled_pool(_records(args.input, category, strict, {}), args.unlabeled, label_cfg,
                                    seed=derive_seed(seed, "unlabeled"), tokenizer=tokenizer,
                                    exclude_keys=keys, jobs=args.jobs, category=category)
    manifest.counts = {
        "category": category,
        "train": len(splits["train"]),
        "validation": len(splits["validation"]),
        "test": len(splits["test"]),
        "unlabeled": len(pool) if pool is not None else 0,
        "shortfall": dataset.shortfall,
        "tallies": dataset.tallies,
        "skipped_lines": skipped,
    }
    save_prepared(args.out, splits, pool, manifest)
    return manifest.counts


def cmd_stats(args, parser):
    category = normalize_category(args.category)
    skipped = {}
    report = corpus_stats(_records(args.input, category, not args.skip_bad_lines, skipped), category)
    print_corpus_stats(report)
    if args.plot:
        plot_voting_distribution(report, save_path=args.plot)
    result = report.to_dict()
    result["skipped_lines"] = skipped
    return result


def cmd_embed(args, parser):
    seed = resolve_seed(args.seed)
    overrides = {"dim": args.dim, "epochs": args.epochs, "min_count": args.min_count,
                 "bucket_count": args.bucket_count}
    cfg = load_config(args.config, overrides, section="skipgram")
    manifest = RunManifest.start("embed", asdict(cfg), seed)
    manifest.add_input(args.labeled)
    prepared = load_prepared(args.labeled)
    if args.unlabeled:
        manifest.add_input(args.unlabeled)
        prepared = replace(prepared, pool=load_pool(args.unlabeled, category=prepared.category))
    table = build_embedding_table(prepared, cfg, seed=derive_seed(seed, prepared.category))
    out_dir = os.path.dirname(os.path.abspath(args.out))
    save_table(table, args.out)
    manifest.add_output(args.out)
    if args.export_text:
        export_text(table, args.export_text)
        manifest.add_output(args.export_text)
    manifest.counts = {"category": prepared.category, "words": table.vocab.size - 2,
                       "dim": table.dim, "epoch_loss": [float(x) for x in table.history]}
    manifest.write(out_dir, name=os.path.basename(args.out) + ".manifest.json")
    result = dict(manifest.counts)
    if args.neighbors:
        result["neighbors"] = nearest_neighbors(args.neighbors, 10, table)
        print(f"\nNearest neighbors of '{args.neighbors}':")
        for word, cos in result["neighbors"]:
            print(f"  {word:<20} {cos:.4f}")
    print(f"  Saved embedding table to {args.out}")
    return result


def cmd_train(args, parser):
    # a seed from the config file survives unless --seed or HELPRANK_SEED is given
    overrides = {"epochs": args.epochs, "batch_size": args.batch_size, "learning_rate": args.learning_rate,
                 "embed_dim": args.embed_dim, "rnn_hidden": args.rnn_hidden, "fc_hidden": args.fc_hidden,
                 "max_len": args.max_len, "min_count": args.min_count, "dtype": args.dtype,
                 "seed": seed_override(args.seed)}
    if args.model != "all":
        overrides["model"] = args.model
    cfg = load_config(args.config, overrides, task=args.task)
    seed = cfg.seed
    results = validate_train_config(cfg)
    if not results['valid']:
        print_validation_results(results)
        raise HelprankError("invalid training configuration", errors=results['errors'])

    manifest = RunManifest.start("train", cfg.to_dict(), seed)
    for directory in args.data:
        manifest.add_input(directory)
    data = load_all_prepared(args.data)

    if args.model == "all":
        reports = run_model_comparison(data, cfg, seed=seed)
        frame = model_comparison_table(reports)
        os.makedirs(args.out, exist_ok=True)
        for kind, report in reports.items():
            print_experiment_summary(report)
            with open(os.path.join(args.out, f"report.{kind}.json"), "w", encoding="utf-8") as f:
                f.write(report.to_json())
        print("\n" + frame.to_string(index=False))
        if args.plot:
            plot_model_comparison(frame, save_path=args.plot)
        result = {"models": {k: r.to_dict() for k, r in reports.items()},
                  "table": json.loads(frame.to_json(orient="records"))}
    else:
        if cfg.task == "t2":
            tables = load_table(args.embeddings) if args.embeddings else None
            if args.embeddings:
                manifest.add_input(args.embeddings)
            report = run_experiment_t2(data, cfg, tables=tables, seed=seed, out_dir=args.out)
        else:
            report = run_experiment_t1(data, cfg, seed=seed, out_dir=args.out)
        print_experiment_summary(report)
        if args.plot:
            plot_validation_curves(report, save_path=args.plot)
        result = report.to_dict()

    for name in sorted(os.listdir(args.out)):
        path = os.path.join(args.out, name)
        if os.path.isfile(path) and name != "manifest.json":
            manifest.add_output(path)
    manifest.counts = {"categories": sorted(data)}
    manifest.write(args.out)
    return result


def _load_classifier(args):
    table = load_table(args.embeddings) if args.embeddings else None
    vocab = Vocabulary.load(args.vocab) if getattr(args, "vocab", None) else None
    return load_model(args.model, vocab=vocab, oov_lookup=table_oov_lookup(table))


def cmd_eval(args, parser):
    model = _load_classifier(args)
    prepared = load_prepared(args.data)
    test = encode_split(prepared.splits["test"], model.vocab, model.max_len, model.tokenizer)
    result = evaluate(model, test)
    c = result.confusion
    print("\n" + "=" * 70)
    print(f"EVALUATION: {model.kind.upper()} on {prepared.category} ({len(test)} test reviews)")
    print("=" * 70)
    print(f"  Accuracy: {100 * result.accuracy:.2f}%")
    print(f"  TP={c.tp} FP={c.fp} TN={c.tn} FN={c.fn}")
    print("=" * 70)
    return {"category": prepared.category, "model": model.kind, "accuracy": result.accuracy,
            "confusion": c.to_dict(), "test_size": len(test), "test_hash": prepared.split_hash("test")}


def cmd_predict(args, parser):
    model = _load_classifier(args)
    if args.text is not None:
        texts = [args.text]
    else:
        with open(args.input, "r", encoding="utf-8") as f:
            texts = [line.rstrip("\n") for line in f]
    predictions = []
    for text in texts:
        label, confidence = predict(model, text)
        low = is_low_confidence(model, text)
        predictions.append({"label": label.value, "confidence": confidence, "low_confidence": low})
        flag = "  (low confidence)" if low else ""
        print(f"{label.value:<10} {confidence:.4f}{flag}")
    return predictions[0] if args.text is not None else predictions


def cmd_compare(args, parser):
    if args.reference:
        report_a, report_b = reference_reports()
    elif len(args.reports) == 2:
        report_a, report_b = (ExperimentReport.load(path) for path in args.reports)
    else:
        parser.error("compare needs exactly two report files (or --reference)")
    table = compare_reports(report_a, report_b)
    print_comparison(table)
    if args.plot:
        plot_accuracy_comparison(table, save_path=args.plot)
    return table.to_dict()


def cmd_validate(args, parser):
    if args.section == "train":
        cfg = load_config(args.config, task=args.task)
        results = validate_train_config(cfg, n_train=args.n_train)
    elif args.section == "label":
        results = validate_label_config(load_config(args.config, section="label"))
    elif args.section == "split":
        cfg = load_config(args.config, section="split")
        results = validate_split_spec(cfg)
    else:
        results = validate_skipgram_config(load_config(args.config, section="skipgram"))
    results = merge_results(results)
    print_validation_results(results)
    if not results['valid']:
        raise HelprankError("invalid configuration", errors=results['errors'])
    return results


COMMANDS = {
    "prepare": cmd_prepare,
    "stats": cmd_stats,
    "embed": cmd_embed,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "compare": cmd_compare,
    "validate": cmd_validate,
}


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------

def _error_json(e):
    if isinstance(e, HelprankError):
        return e.to_dict()
    if isinstance(e, OSError):
        return {"error": "IoError", "message": e.strerror or str(e), "path": e.filename}
    return {"error": type(e).__name__, "message": str(e)}


def dispatch(argv=None):
    """
    Run one subcommand.

    Returns:
    --------
    int
        0 on success, 1 on a domain or I/O error, 2 on a usage error
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 2

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    logger.debug("helprank %s: %s", VERSION, args.command)
    human = sys.stderr if args.json else sys.stdout
    try:
        with contextlib.redirect_stdout(human):
            result = COMMANDS[args.command](args, parser)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 2
    except (HelprankError, OSError, ValueError) as e:
        sys.stderr.write(json.dumps(_error_json(e), default=str) + "\n")
        return 1

    if args.json:
        sys.stdout.write(json.dumps(result, indent=2, sort_keys=True, default=str) + "\n")
    return 0


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
