"""
Training and evaluation: batching, the Adam epoch loop with validation-based model
selection, accuracy/confusion evaluation, the supervised (t1) and semi-supervised (t2)
experiments, and experiment reports and comparisons.
"""

import dataclasses
import json
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from classifiers import (NEURAL_MODELS, NgramFeaturizer, SVMParams, TrainedModel,
                         batch_from_sequences, init_params, save_model, svm_scores, svm_train)
from config import (CATEGORIES, REFERENCE_TEST_SIZE, REFERENCE_TRAINING_SIZES,
                    SEMI_SUPERVISED_REFERENCE, SUPERVISED_REFERENCE, SkipgramConfig,
                    TrainConfig, derive_seed)
from data_loader import PreparedData, load_prepared, text_sha256
from embeddings import init_random_uniform, lookup_for_vocab, save_table, train_skipgram, word_vector
from errors import DivergenceError, EmptySplit, MissingCategory, ProvenanceError
from numerics import AdamState, ParamSet, adam_step, batch_softmax_cross_entropy
from text_pipeline import UNK, EncodedSequence, Tokenizer, build_vocabulary, encode, fit_idf, tfidf_matrix

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# Data hygiene
# ---------------------------------------------------------------------------

class ProvenanceGuard:
    """Remembers the test split's texts and refuses them in training-only stages."""

    def __init__(self, test_texts):
        self.fingerprints = {text_sha256(t) for t in test_texts}

    def check(self, texts, stage):
        for i, text in enumerate(texts):
            if text_sha256(text) in self.fingerprints:
                raise ProvenanceError(f"test-split text reached {stage} (document {i})",
                                      stage=stage, document=i)
        return texts

    def check_table(self, table, stage="skip-gram training"):
        """Refuse a table whose recorded training texts overlap the test split."""
        if table.corpus_digests is None:
            raise ProvenanceError("embedding table has no record of its training texts", stage=stage)
        leaked = len(self.fingerprints & table.corpus_digests)
        if leaked:
            raise ProvenanceError(f"{leaked} test-split texts reached {stage}", stage=stage, documents=leaked)
        return table


# ---------------------------------------------------------------------------
# Encoding and batching
# ---------------------------------------------------------------------------

@dataclass
class EncodedSplit:
    sequences: List[EncodedSequence]
    labels: np.ndarray
    tokens: List[list]

    def __len__(self):
        return len(self.sequences)


def encode_split(dataset, vocab, max_len=500, tokenizer=None):
    tokenizer = tokenizer or Tokenizer()
    tokens = [tokenizer.tokenize(t) for t in dataset.texts]
    labels = np.array([label.index for label in dataset.labels], dtype=np.int64)
    sequences = [encode(tok, vocab, max_len, label=int(y)) for tok, y in zip(tokens, labels)]
    return EncodedSplit(sequences=sequences, labels=labels, tokens=tokens)


def make_batches(sequences, batch_size=128, seed=0, epoch_index=0, labels=None,
                 oov_lookup=None, featurizer=None, bucket_factor=50):
    """
    Yield Batches for one epoch.

    Order is a permutation keyed by (seed, epoch_index). Within pools of
    batch_size * bucket_factor examples the permutation is sorted by length so batches
    hold similar lengths; full batches are then shuffled and the final partial batch
    comes last. Empty sequences are skipped.
    """
    rng = np.random.default_rng(derive_seed(seed, f"batches:{epoch_index}"))
    usable = np.array([i for i, s in enumerate(sequences) if s.length > 0], dtype=np.int64)
    if len(usable) < len(sequences):
        logger.debug("Skipping %d empty sequences", len(sequences) - len(usable))
    order = usable[rng.permutation(len(usable))]
    lengths = np.array([sequences[i].length for i in order], dtype=np.int64)

    pool = batch_size * bucket_factor
    bucketed = []
    for start in range(0, len(order), pool):
        chunk = order[start:start + pool]
        chunk_lengths = lengths[start:start + pool]
        bucketed.extend(chunk[np.argsort(chunk_lengths, kind="stable")])
    bucketed = np.asarray(bucketed, dtype=np.int64)

    groups = [bucketed[i:i + batch_size] for i in range(0, len(bucketed), batch_size)]
    full = [g for g in groups if len(g) == batch_size]
    partial = [g for g in groups if len(g) < batch_size]
    full = [full[i] for i in rng.permutation(len(full))]

    for members in full + partial:
        yield batch_from_sequences(
            [sequences[i] for i in members],
            labels=None if labels is None else labels[members],
            oov_lookup=oov_lookup, indices=members, featurizer=featurizer)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass
class ConfusionMatrix:
    """Counts[true][predicted] with class 0 = helpful as the positive class."""
    counts: List[List[int]]

    @classmethod
    def from_predictions(cls, y_true, y_pred):
        counts = [[0, 0], [0, 0]]
        for t, p in zip(np.asarray(y_true).tolist(), np.asarray(y_pred).tolist()):
            counts[int(t)][int(p)] += 1
        return cls(counts=counts)

    @property
    def tp(self):
        return self.counts[0][0]

    @property
    def fn(self):
        return self.counts[0][1]

    @property
    def fp(self):
        return self.counts[1][0]

    @property
    def tn(self):
        return self.counts[1][1]

    @property
    def total(self):
        return self.tp + self.fn + self.fp + self.tn

    @property
    def accuracy(self):
        return (self.tp + self.tn) / self.total if self.total else 0.0

    def to_dict(self):
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}

    @classmethod
    def from_dict(cls, d):
        return cls(counts=[[d["tp"], d["fn"]], [d["fp"], d["tn"]]])


@dataclass
class EvalResult:
    accuracy: float
    confusion: ConfusionMatrix
    predictions: np.ndarray


def predict_classes(model, split, batch_size=256):
    """Class indices for every example of an encoded split; empty texts use the UNK path."""
    if model.kind == "svm":
        X = tfidf_matrix(split.tokens, model.vocab, model.idf)
        scores = svm_scores(SVMParams.from_paramset(model.params, model.svm_lambda), X)
        return np.where(scores >= 0, 0, 1).astype(np.int64)
    preds = np.zeros(len(split), dtype=np.int64)
    sequences = [s if s.length > 0 else EncodedSequence(ids=(UNK,), length=1) for s in split.sequences]
    for start in range(0, len(sequences), batch_size):
        logits = model.logits_for(sequences[start:start + batch_size])
        preds[start:start + batch_size] = np.argmax(logits, axis=1)
    return preds


def evaluate(model, split):
    """
    Accuracy and confusion matrix of a trained model on an encoded split.

    Raises EmptySplit for a split with no examples.
    """
    if len(split) == 0:
        raise EmptySplit("cannot evaluate on an empty split")
    preds = predict_classes(model, split)
    confusion = ConfusionMatrix.from_predictions(split.labels, preds)
    return EvalResult(accuracy=confusion.accuracy, confusion=confusion, predictions=preds)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class TrainingHistory:
    validation_curve: List[float] = field(default_factory=list)
    train_losses: List[float] = field(default_factory=list)
    selected_epoch: int = 0
    final_params: Optional[object] = None


def _model_for(kind, params, vocab, cfg, oov_lookup=None, featurizer=None):
    return TrainedModel(kind=kind, params=params, vocab=vocab, max_len=cfg.max_len,
                        config=cfg.to_dict(), oov_lookup=oov_lookup, featurizer=featurizer)


def train_model(kind, cfg, train, validation, vocab, embedding_matrix=None, oov_lookup=None,
                seed=None):
    """
    Train a neural classifier with Adam and keep the best validation epoch.

    Parameters:
    -----------
    kind : str
        "rcnn", "cnn" or "linear"
    cfg : TrainConfig
        Batch size, epochs, learning rate, widths and dtype
    train, validation : EncodedSplit
        Disjoint encoded splits
    vocab : Vocabulary
        Vocabulary the splits were encoded with
    embedding_matrix : np.ndarray, optional
        Initial look-up table for rcnn/cnn
    oov_lookup : callable, optional
        Fixed vectors for out-of-vocabulary tokens
    seed : int, optional
        Defaults to cfg.seed

    Returns:
    --------
    tuple
        (best TrainedModel, TrainingHistory)
    """
    seed = cfg.seed if seed is None else seed
    forward, backward = NEURAL_MODELS[kind]
    featurizer = NgramFeaturizer(vocab.size, cfg.word_ngrams, cfg.bigram_buckets) if kind == "linear" else None
    params = init_params(kind, cfg, vocab, embedding_matrix, seed=derive_seed(seed, f"init:{kind}"))
    state = AdamState.for_params(params, learning_rate=cfg.learning_rate)
    dropout_rng = np.random.default_rng(derive_seed(seed, "dropout"))
    history = TrainingHistory()
    best_params = params.copy()
    best_acc = -1.0

    for epoch in range(1, cfg.epochs + 1):
        total_loss = 0.0
        seen = 0
        for b, batch in enumerate(make_batches(train.sequences, cfg.batch_size, seed, epoch,
                                                labels=train.labels, oov_lookup=oov_lookup,
                                                featurizer=featurizer)):
            if kind == "cnn":
                logits, trace = forward(params, batch, training=True, rng=dropout_rng, dropout=cfg.dropout)
            else:
                logits, trace = forward(params, batch, training=True)
            loss, dlogits = batch_softmax_cross_entropy(logits, batch.labels)
            if not np.isfinite(loss):
                raise DivergenceError(epoch=epoch, batch=b, loss=float(loss))
            grads = backward(params, batch, trace, dlogits)
            if cfg.freeze_embeddings and kind in ("rcnn", "cnn"):
                grads = ParamSet([(n, g) for n, g in grads.items() if n != "E"])
            adam_step(params, grads, state)
            total_loss += float(loss) * batch.size
            seen += batch.size

        epoch_loss = total_loss / max(seen, 1)
        model = _model_for(kind, params, vocab, cfg, oov_lookup, featurizer)
        val_acc = evaluate(model, validation).accuracy if len(validation) else 0.0
        history.train_losses.append(epoch_loss)
        history.validation_curve.append(val_acc)
        logger.info("%s epoch %d/%d: train loss %.4f, validation accuracy %.4f",
                    kind, epoch, cfg.epochs, epoch_loss, val_acc)
        if val_acc > best_acc:
            best_acc = val_acc
            best_params = params.copy()
            history.selected_epoch = epoch

    history.final_params = params
    return _model_for(kind, best_params, vocab, cfg, oov_lookup, featurizer), history


def train_svm(cfg, train, validation, vocab, seed=None):
    """Fit idf on the training split, then train the SVM; the validation curve has one point."""
    seed = cfg.seed if seed is None else seed
    idf = fit_idf(train.tokens, vocab)
    X = tfidf_matrix(train.tokens, vocab, idf)
    svm = svm_train(X, train.labels, lam=cfg.svm_lambda, epochs=cfg.svm_epochs,
                    seed=derive_seed(seed, "svm"))
    model = TrainedModel(kind="svm", params=svm.to_paramset(), vocab=vocab, max_len=cfg.max_len,
                         config=cfg.to_dict(), idf=idf, svm_lambda=cfg.svm_lambda)
    history = TrainingHistory(selected_epoch=cfg.svm_epochs, final_params=model.params)
    if len(validation):
        history.validation_curve.append(evaluate(model, validation).accuracy)
    return model, history


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass
class CategoryResult:
    accuracy: float
    final_accuracy: float
    confusion: ConfusionMatrix
    final_confusion: ConfusionMatrix
    validation_curve: List[float]
    selected_epoch: int
    training_size: int
    test_size: int
    test_hash: str = ""

    def to_dict(self):
        return {
            "accuracy": self.accuracy,
            "final_accuracy": self.final_accuracy,
            "confusion": self.confusion.to_dict(),
            "final_confusion": self.final_confusion.to_dict(),
            "validation_curve": list(self.validation_curve),
            "selected_epoch": self.selected_epoch,
            "training_size": self.training_size,
            "test_size": self.test_size,
            "test_hash": self.test_hash,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(accuracy=d["accuracy"], final_accuracy=d.get("final_accuracy", d["accuracy"]),
                   confusion=ConfusionMatrix.from_dict(d["confusion"]),
                   final_confusion=ConfusionMatrix.from_dict(d.get("final_confusion", d["confusion"])),
                   validation_curve=list(d.get("validation_curve", [])),
                   selected_epoch=d.get("selected_epoch", 0), training_size=d.get("training_size", 0),
                   test_size=d.get("test_size", 0), test_hash=d.get("test_hash", ""))


@dataclass
class ExperimentReport:
    task: str
    model: str
    categories: Dict[str, CategoryResult]
    config: dict = field(default_factory=dict)
    config_fingerprint: str = ""
    data_manifest: dict = field(default_factory=dict)
    overrides: dict = field(default_factory=dict)
    wall_clock: float = 0.0
    schema_version: int = REPORT_SCHEMA_VERSION

    @property
    def overall(self):
        """Unweighted mean of per-category accuracies."""
        return float(np.mean([c.accuracy for c in self.categories.values()])) if self.categories else 0.0

    @property
    def overall_final(self):
        return float(np.mean([c.final_accuracy for c in self.categories.values()])) if self.categories else 0.0

    def reference(self):
        if self.task == "t2":
            return {cat: SEMI_SUPERVISED_REFERENCE.get(cat) for cat in self.categories}
        return {cat: SUPERVISED_REFERENCE.get(cat, {}).get(self.model) for cat in self.categories}

    def to_dict(self, include_timing=False):
        d = {
            "schema_version": self.schema_version,
            "task": self.task,
            "model": self.model,
            "categories": {name: self.categories[name].to_dict() for name in sorted(self.categories)},
            "overall": self.overall,
            "overall_final": self.overall_final,
            "config": self.config,
            "config_fingerprint": self.config_fingerprint,
            "data_manifest": self.data_manifest,
            "overrides": self.overrides,
            "reference": self.reference(),
        }
        if include_timing:
            d["wall_clock"] = self.wall_clock
        return d

    def to_json(self, include_timing=False):
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        return cls(task=d["task"], model=d["model"],
                   categories={k: CategoryResult.from_dict(v) for k, v in d["categories"].items()},
                   config=d.get("config", {}), config_fingerprint=d.get("config_fingerprint", ""),
                   data_manifest=d.get("data_manifest", {}), overrides=d.get("overrides", {}),
                   wall_clock=d.get("wall_clock", 0.0),
                   schema_version=d.get("schema_version", REPORT_SCHEMA_VERSION))

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def to_frame(self):
        rows = []
        for name in sorted(self.categories):
            r = self.categories[name]
            rows.append({"Category": name, "Training size": r.training_size, "Testing size": r.test_size,
                         "Accuracy": round(100 * r.accuracy, 2),
                         "Final-epoch accuracy": round(100 * r.final_accuracy, 2),
                         "Selected epoch": r.selected_epoch})
        rows.append({"Category": "Overall", "Training size": None, "Testing size": None,
                     "Accuracy": round(100 * self.overall, 2),
                     "Final-epoch accuracy": round(100 * self.overall_final, 2),
                     "Selected epoch": None})
        return pd.DataFrame(rows)


def write_report(report, out_dir, name="report"):
    """report.json (deterministic, timing excluded) plus report.txt."""
    os.makedirs(out_dir, exist_ok=True)
    json_path = os.path.join(out_dir, f"{name}.json")
    with open(json_path, "w", encoding="utf-8") as f:
        f.write(report.to_json())
    txt_path = os.path.join(out_dir, f"{name}.txt")
    with open(txt_path, "w", encoding="utf-8") as f:
        f.write(report.to_frame().to_string(index=False) + "\n")
    return json_path


def print_experiment_summary(report):
    print("\n" + "=" * 70)
    print(f"EXPERIMENT SUMMARY: task {report.task.upper()}, model {report.model.upper()}")
    print("=" * 70)
    print(report.to_frame().to_string(index=False))
    for name in sorted(report.categories):
        c = report.categories[name].confusion
        print(f"\n  {name}: TP={c.tp} FP={c.fp} TN={c.tn} FN={c.fn}")
    if report.overrides:
        print(f"\n  Overrides of the {report.task} setup: {report.overrides}")
    ref = {k: v for k, v in report.reference().items() if v is not None}
    if ref:
        print(f"\n  Published full-scale accuracies (reference only): {ref}")
    print("=" * 70)


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

def _as_prepared(data):
    if isinstance(data, PreparedData):
        return {data.category: data}
    if isinstance(data, dict):
        return data
    if isinstance(data, (str, os.PathLike)):
        p = load_prepared(data)
        return {p.category: p}
    out = {}
    for item in data:
        out.update(_as_prepared(item))
    return out


def _fingerprint(cfg, manifest, extra=None):
    payload = {"data": manifest}
    payload.update(extra or {})
    return cfg.fingerprint(payload)


def table_oov_lookup(table):
    """Memoized subword composition for tokens outside the classifier vocabulary."""
    if table is None or table.subword_vectors is None:
        return None
    cache = {}

    def lookup(tok):
        if tok not in cache:
            cache[tok] = word_vector(tok, table)
        return cache[tok]
    return lookup


def _run_category(prepared, cfg, seed, embedding_table=None, tokenizer=None):
    """Vocabulary, encoding, training and test evaluation for one category."""
    tokenizer = tokenizer or Tokenizer()
    splits = prepared.splits
    guard = ProvenanceGuard(splits["test"].texts)
    guard.check(splits["train"].texts, "vocabulary construction")
    train_tokens = [tokenizer.tokenize(t) for t in splits["train"].texts]
    vocab = build_vocabulary(train_tokens, min_count=cfg.min_count)

    train = encode_split(splits["train"], vocab, cfg.max_len, tokenizer)
    validation = encode_split(splits["validation"], vocab, cfg.max_len, tokenizer)
    test = encode_split(splits["test"], vocab, cfg.max_len, tokenizer)

    if cfg.model == "svm":
        guard.check(splits["train"].texts, "idf fitting")
        model, history = train_svm(cfg, train, validation, vocab, seed)
        final_model = model
    else:
        oov_lookup = None
        if embedding_table is not None:
            matrix = lookup_for_vocab(embedding_table, vocab)
            oov_lookup = table_oov_lookup(embedding_table)
        else:
            matrix = init_random_uniform(vocab, cfg.embed_dim, seed=derive_seed(seed, "embedding"),
                                         scale=cfg.init_scale, dtype=np.dtype(cfg.dtype)).word_vectors
        model, history = train_model(cfg.model, cfg, train, validation, vocab, matrix, oov_lookup, seed)
        final_model = _model_for(cfg.model, history.final_params, vocab, cfg, oov_lookup, model.featurizer)

    best = evaluate(model, test)
    final = evaluate(final_model, test)
    training_size = len(splits["train"]) + len(splits["validation"])
    result = CategoryResult(accuracy=best.accuracy, final_accuracy=final.accuracy,
                            confusion=best.confusion, final_confusion=final.confusion,
                            validation_curve=history.validation_curve,
                            selected_epoch=history.selected_epoch,
                            training_size=training_size, test_size=len(splits["test"]),
                            test_hash=prepared.split_hash("test"))
    logger.info("%s %s: test accuracy %.4f (best epoch %d), final epoch %.4f",
                prepared.category, cfg.model, best.accuracy, history.selected_epoch, final.accuracy)
    return result, model


def run_experiment_t1(data, cfg=None, seed=None, out_dir=None, tokenizer=None):
    """
    Supervised experiment: random-uniform look-up table, train, select, test.

    Parameters:
    -----------
    data : str, PreparedData, or list of them
        Prepared category directories
    cfg : TrainConfig, optional
        Defaults to the t1 setup
    seed : int, optional
        Defaults to cfg.seed
    out_dir : str, optional
        Where report.json/report.txt and model checkpoints are written

    Returns:
    --------
    ExperimentReport
    """
    cfg = cfg or TrainConfig.for_task("t1")
    seed = cfg.seed if seed is None else seed
    started = time.perf_counter()
    prepared = _as_prepared(data)
    results, manifest, models = {}, {}, {}
    for name in sorted(prepared):
        p = prepared[name]
        results[name], models[name] = _run_category(p, cfg, derive_seed(seed, name), tokenizer=tokenizer)
        manifest[name] = {split: p.split_hash(split) for split in ("train", "validation", "test")}
    report = ExperimentReport(task=cfg.task, model=cfg.model, categories=results, config=cfg.to_dict(),
                              config_fingerprint=_fingerprint(cfg, manifest, {"seed": seed}),
                              data_manifest=manifest, overrides=cfg.task_overrides(),
                              wall_clock=time.perf_counter() - started)
    if out_dir:
        _write_outputs(report, models, out_dir)
    return report


def skipgram_corpus(prepared, tokenizer=None):
    """
    Texts for embedding pre-training: labeled train + validation plus the unlabeled pool.

    Unlabeled reviews sharing a (reviewer, item) key with a labeled review are dropped.
    """
    tokenizer = tokenizer or Tokenizer()
    labeled = list(prepared.splits["train"].examples) + list(prepared.splits["validation"].examples)
    texts = [ex.text for ex in labeled]
    if prepared.pool is not None:
        labeled_keys = {ex.record.key for ex in labeled}
        keys = prepared.pool.keys or (("", ""),) * len(prepared.pool.texts)
        texts += [t for t, k in zip(prepared.pool.texts, keys)
                  if k == ("", "") or k not in labeled_keys]
    return texts


def build_embedding_table(prepared, skipgram_cfg=None, seed=0, tokenizer=None, extra_texts=None):
    """Train a skip-gram table for one category after checking test-split provenance."""
    tokenizer = tokenizer or Tokenizer()
    skipgram_cfg = skipgram_cfg or SkipgramConfig()
    texts = skipgram_corpus(prepared, tokenizer) + list(extra_texts or [])
    ProvenanceGuard(prepared.splits["test"].texts).check(texts, "skip-gram training")
    corpus = [tokenizer.tokenize(t) for t in texts]
    table = train_skipgram(corpus, skipgram_cfg, seed=derive_seed(seed, "skipgram"))
    table.corpus_digests = frozenset(text_sha256(t) for t in texts)
    return table


def run_experiment_t2(data, cfg=None, tables=None, skipgram_cfg=None, seed=None, out_dir=None,
                      tokenizer=None):
    """
    Semi-supervised experiment: skip-gram look-up table initialization, then as t1.

    Parameters:
    -----------
    data : str, PreparedData, or list of them
        Prepared category directories (with unlabeled pools when no table is given)
    cfg : TrainConfig, optional
        Defaults to the t2 setup
    tables : EmbeddingTable or dict, optional
        One table for all categories, or one per category; trained here when absent.
        A supplied table must record its training texts, and none may be a test-split text
    skipgram_cfg : SkipgramConfig, optional
        Used when tables are trained here; dim follows cfg.embed_dim

    Returns:
    --------
    ExperimentReport
    """
    cfg = cfg or TrainConfig.for_task("t2")
    seed = cfg.seed if seed is None else seed
    started = time.perf_counter()
    prepared = _as_prepared(data)
    if skipgram_cfg is None:
        skipgram_cfg = SkipgramConfig(dim=cfg.embed_dim)
    results, manifest, models, used = {}, {}, {}, {}
    for name in sorted(prepared):
        p = prepared[name]
        if tables is None:
            table = build_embedding_table(p, skipgram_cfg, seed=derive_seed(seed, name), tokenizer=tokenizer)
        else:
            table = tables[name] if isinstance(tables, dict) else tables
            ProvenanceGuard(p.splits["test"].texts).check_table(table)
        used[name] = table
        results[name], models[name] = _run_category(p, cfg, derive_seed(seed, name), table, tokenizer)
        unlabeled = len(p.pool) if p.pool is not None else 0
        results[name].training_size += unlabeled
        manifest[name] = {split: p.split_hash(split) for split in ("train", "validation", "test")}
        manifest[name]["unlabeled"] = unlabeled
    report = ExperimentReport(task=cfg.task, model=cfg.model, categories=results, config=cfg.to_dict(),
                              config_fingerprint=_fingerprint(cfg, manifest, {"seed": seed}),
                              data_manifest=manifest, overrides=cfg.task_overrides(),
                              wall_clock=time.perf_counter() - started)
    if out_dir:
        _write_outputs(report, models, out_dir, tables=used)
    return report


def _write_outputs(report, models, out_dir, tables=None):
    os.makedirs(out_dir, exist_ok=True)
    write_report(report, out_dir)
    for name, model in models.items():
        save_model(model, os.path.join(out_dir, f"{name}.{report.model}.ckpt"))
    for name, table in (tables or {}).items():
        save_table(table, os.path.join(out_dir, f"{name}.embeddings"))


def run_model_comparison(data, cfg=None, models=("linear", "svm", "cnn", "rcnn"), seed=None):
    """Train several model kinds on the same splits; returns {model: ExperimentReport}."""
    cfg = cfg or TrainConfig.for_task("t1")
    prepared = _as_prepared(data)
    reports = {}
    for kind in models:
        reports[kind] = run_experiment_t1(prepared, dataclasses.replace(cfg, model=kind), seed=seed)
    return reports


def model_comparison_table(reports):
    """Per-category x model accuracy table (percent) with an Overall row."""
    categories = sorted({c for r in reports.values() for c in r.categories})
    rows = []
    for cat in categories:
        row = {"Category": cat}
        for kind, r in reports.items():
            row[kind] = round(100 * r.categories[cat].accuracy, 2) if cat in r.categories else None
        rows.append(row)
    overall = {"Category": "Overall"}
    for kind, r in reports.items():
        overall[kind] = round(100 * r.overall, 2)
    rows.append(overall)
    return pd.DataFrame(rows)


# ---------------------------------------------------------------------------
# Comparison
# ---------------------------------------------------------------------------

@dataclass
class ComparisonTable:
    label_a: str
    label_b: str
    frame: pd.DataFrame
    overall_a: float
    overall_b: float

    @property
    def overall_delta(self):
        return round(self.overall_b - self.overall_a, 6)

    @property
    def deltas(self):
        body = self.frame[self.frame["Category"] != "Overall"]
        return dict(zip(body["Category"], body["Delta"]))

    def to_dict(self):
        return {
            "a": self.label_a,
            "b": self.label_b,
            "rows": json.loads(self.frame.to_json(orient="records")),
            "overall_a": self.overall_a,
            "overall_b": self.overall_b,
            "overall_delta": self.overall_delta,
        }

    def to_text(self):
        return self.frame.to_string(index=False)


def _pct(x):
    return round(100.0 * x, 6)


def compare_reports(report_a, report_b):
    """
    Per-category and overall accuracy deltas (percentage points, b minus a).

    Raises MissingCategory when the reports do not cover the same categories.
    """
    cats_a, cats_b = set(report_a.categories), set(report_b.categories)
    if cats_a != cats_b:
        missing = sorted(cats_a ^ cats_b)
        raise MissingCategory(f"categories differ between reports: {missing}", categories=",".join(missing))
    label_a = f"{report_a.task.upper()} {report_a.model}"
    label_b = f"{report_b.task.upper()} {report_b.model}"
    if label_a == label_b:
        label_a, label_b = f"{label_a} (a)", f"{label_b} (b)"
    order = [c for c in CATEGORIES if c in cats_a] + sorted(c for c in cats_a if c not in CATEGORIES)
    rows = []
    for cat in order:
        a, b = report_a.categories[cat], report_b.categories[cat]
        rows.append({
            "Category": cat,
            f"Training size {label_a}": a.training_size,
            f"Training size {label_b}": b.training_size,
            "Testing size": b.test_size,
            f"Accuracy {label_a}": _pct(a.accuracy),
            f"Accuracy {label_b}": _pct(b.accuracy),
            "Delta": round(_pct(b.accuracy) - _pct(a.accuracy), 6),
        })
    overall_a, overall_b = _pct(report_a.overall), _pct(report_b.overall)
    rows.append({"Category": "Overall", f"Training size {label_a}": None, f"Training size {label_b}": None,
                 "Testing size": None, f"Accuracy {label_a}": overall_a, f"Accuracy {label_b}": overall_b,
                 "Delta": round(overall_b - overall_a, 6)})
    return ComparisonTable(label_a=label_a, label_b=label_b, frame=pd.DataFrame(rows),
                           overall_a=overall_a, overall_b=overall_b)


def print_comparison(table):
    print("\n" + "=" * 70)
    print(f"ACCURACY COMPARISON: {table.label_a} vs {table.label_b}")
    print("=" * 70)
    print(table.to_text())
    print(f"\nOverall delta: {table.overall_delta:+.2f} points")
    print("=" * 70)


def reference_reports():
    """
    Reports carrying the published full-scale RCNN accuracies for t1 and t2.

    Confusion matrices are synthesized on the published test size so accuracies
    recompute exactly from them.
    """
    def result(acc_pct, task):
        correct = int(round(acc_pct / 100 * REFERENCE_TEST_SIZE))
        half = REFERENCE_TEST_SIZE // 2
        tp = min(correct, half)
        tn = correct - tp
        cm = ConfusionMatrix(counts=[[tp, half - tp], [REFERENCE_TEST_SIZE - half - tn, tn]])
        return CategoryResult(accuracy=acc_pct / 100, final_accuracy=acc_pct / 100, confusion=cm,
                              final_confusion=cm, validation_curve=[], selected_epoch=0,
                              training_size=REFERENCE_TRAINING_SIZES[task],
                              test_size=REFERENCE_TEST_SIZE)

    t1 = ExperimentReport(task="t1", model="rcnn",
                          categories={c: result(SUPERVISED_REFERENCE[c]["rcnn"], "t1") for c in CATEGORIES},
                          config=TrainConfig.for_task("t1").to_dict())
    t2 = ExperimentReport(task="t2", model="rcnn",
                          categories={c: result(SEMI_SUPERVISED_REFERENCE[c], "t2") for c in CATEGORIES},
                          config=TrainConfig.for_task("t2").to_dict())
    return t1, t2
