"""
Tests for batching, training, evaluation, the t1/t2 experiments and report comparison.
"""

import json
import os

import numpy as np
import pytest

import train_eval
from classifiers import init_params
from config import SkipgramConfig, TrainConfig, derive_seed
from conftest import FILLER, labeled_dataset, make_record
from data_loader import PreparedData, load_prepared
from embeddings import load_table, save_table
from errors import DivergenceError, EmptySplit, MissingCategory, ProvenanceError
from review_corpus import HelpfulnessLabel, LabeledDataset, LabeledExample, UnlabeledPool
from text_pipeline import EncodedSequence, Tokenizer, build_vocabulary
from train_eval import (ConfusionMatrix, EncodedSplit, EvalResult, ExperimentReport, ProvenanceGuard,
                        build_embedding_table, compare_reports, encode_split, evaluate, make_batches,
                        model_comparison_table, reference_reports, run_experiment_t1, run_experiment_t2,
                        run_model_comparison, skipgram_corpus, train_model)

TINY = dict(embed_dim=8, rnn_hidden=8, fc_hidden=8, epochs=2, batch_size=16, min_count=1,
            cnn_maps=4, cnn_widths=(2, 3), linear_dim=8, bigram_buckets=64, svm_epochs=2)
TINY_SKIPGRAM = SkipgramConfig(dim=8, window=2, negatives=2, subsample_t=1.0, epochs=1, min_count=1,
                               bucket_count=2 ** 8)


def tiny_cfg(task="t1", **overrides):
    values = dict(TINY)
    values.update(overrides)
    return TrainConfig.for_task(task, **values)


# ---------------------------------------------------------------------------
# Batching
# ---------------------------------------------------------------------------

def _sequences(n, seed=0, n_empty=0):
    rng = np.random.default_rng(seed)
    seqs = [EncodedSequence(ids=tuple(range(2, 2 + int(k))), length=int(k)) for k in rng.integers(1, 21, n)]
    seqs += [EncodedSequence(ids=(), length=0)] * n_empty
    return seqs


def test_batches_cover_every_sequence_once():
    seqs = _sequences(300)
    batches = list(make_batches(seqs, batch_size=128, seed=1))
    assert [b.size for b in batches] == [128, 128, 44]
    seen = np.concatenate([b.indices for b in batches])
    assert sorted(seen.tolist()) == list(range(300))


def test_batches_skip_empty_sequences():
    seqs = _sequences(50, n_empty=5)
    seen = np.concatenate([b.indices for b in make_batches(seqs, batch_size=16)])
    assert sorted(seen.tolist()) == list(range(50))


def test_batches_are_seeded_per_epoch():
    seqs = _sequences(300)

    def order(seed, epoch):
        return np.concatenate([b.indices for b in make_batches(seqs, 128, seed, epoch)]).tolist()

    assert order(1, 1) == order(1, 1)
    assert order(1, 1) != order(1, 2)
    assert order(1, 1) != order(2, 1)


def test_batches_group_similar_lengths():
    seqs = _sequences(256, seed=4)
    for batch in make_batches(seqs, batch_size=128, bucket_factor=50):
        # one pool covers all 256 sequences, so each batch is one half of the sorted lengths
        assert batch.lengths.max() - batch.lengths.min() <= 19
        assert list(batch.lengths) == sorted(batch.lengths)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def test_confusion_matrix():
    cm = ConfusionMatrix.from_predictions([0, 0, 0, 1, 1], [0, 0, 1, 0, 1])
    assert (cm.tp, cm.fn, cm.fp, cm.tn) == (2, 1, 1, 1)
    assert cm.total == 5
    assert cm.accuracy == pytest.approx(0.6)
    assert ConfusionMatrix.from_dict(cm.to_dict()) == cm
    assert json.dumps(cm.to_dict())


@pytest.fixture
def encoded(small_dataset):
    tokenizer = Tokenizer()
    vocab = build_vocabulary([tokenizer.tokenize(t) for t in small_dataset.texts])
    split = encode_split(small_dataset, vocab)
    return vocab, split


def test_evaluate_is_consistent_with_flipped_labels(encoded):
    vocab, split = encoded
    cfg = tiny_cfg(epochs=0)
    matrix = np.random.default_rng(0).uniform(-0.05, 0.05, (vocab.size, 8)).astype(np.float32)
    model, _ = train_model("rcnn", cfg, split, split, vocab, matrix, seed=0)
    result = evaluate(model, split)
    flipped = EncodedSplit(sequences=split.sequences, labels=1 - split.labels, tokens=split.tokens)
    assert evaluate(model, flipped).accuracy == pytest.approx(1.0 - result.accuracy)
    assert result.confusion.total == len(split)
    assert result.accuracy == result.confusion.accuracy


def test_evaluate_empty_split(encoded):
    vocab, split = encoded
    model, _ = train_model("linear", tiny_cfg(epochs=0), split, split, vocab, seed=0)
    with pytest.raises(EmptySplit):
        evaluate(model, EncodedSplit(sequences=[], labels=np.zeros(0, dtype=np.int64), tokens=[]))


def test_evaluate_handles_empty_texts(encoded):
    vocab, split = encoded
    model, _ = train_model("linear", tiny_cfg(epochs=0), split, split, vocab, seed=0)
    empty = EncodedSplit(sequences=[EncodedSequence(ids=(), length=0)], labels=np.array([0]), tokens=[[]])
    assert evaluate(model, empty).confusion.total == 1


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def test_zero_epochs_returns_initialization(encoded):
    vocab, split = encoded
    cfg = tiny_cfg(epochs=0)
    matrix = np.ones((vocab.size, 8), dtype=np.float32)
    model, history = train_model("rcnn", cfg, split, split, vocab, matrix, seed=3)
    expected = init_params("rcnn", cfg, vocab, matrix, seed=derive_seed(3, "init:rcnn"))
    assert model.params.equals(expected)
    assert history.selected_epoch == 0
    assert history.validation_curve == []


@pytest.mark.parametrize("kind", ["rcnn", "cnn", "linear"])
def test_training_learns_separable_data(kind, encoded):
    vocab, split = encoded
    cfg = tiny_cfg(epochs=10, learning_rate=1e-2)
    matrix = np.random.default_rng(0).uniform(-0.05, 0.05, (vocab.size, 8)).astype(np.float32)
    model, history = train_model(kind, cfg, split, split, vocab, matrix, seed=0)
    assert len(history.validation_curve) == 10
    assert history.validation_curve[history.selected_epoch - 1] == max(history.validation_curve)
    assert evaluate(model, split).accuracy >= 0.9


def test_ties_select_earliest_epoch(encoded, monkeypatch):
    vocab, split = encoded
    monkeypatch.setattr(train_eval, "evaluate",
                        lambda model, s: EvalResult(0.5, ConfusionMatrix([[1, 1], [0, 0]]), np.zeros(2)))
    _, history = train_model("linear", tiny_cfg(epochs=3), split, split, vocab, seed=0)
    assert history.validation_curve == [0.5, 0.5, 0.5]
    assert history.selected_epoch == 1


def test_divergence_is_reported(encoded, monkeypatch):
    vocab, split = encoded
    monkeypatch.setattr(train_eval, "batch_softmax_cross_entropy",
                        lambda logits, labels: (float("nan"), np.zeros_like(logits)))
    with pytest.raises(DivergenceError) as info:
        train_model("linear", tiny_cfg(epochs=2), split, split, vocab, seed=0)
    assert (info.value.epoch, info.value.batch) == (1, 0)


def test_frozen_embeddings_do_not_move(encoded):
    vocab, split = encoded
    matrix = np.random.default_rng(1).uniform(-0.05, 0.05, (vocab.size, 8)).astype(np.float32)
    _, history = train_model("rcnn", tiny_cfg(epochs=1, freeze_embeddings=True), split, split, vocab,
                             matrix, seed=0)
    assert np.array_equal(history.final_params["E"], matrix)


@pytest.mark.slow
def test_rcnn_overfits_sixty_four_examples():
    dataset = labeled_dataset(32, seed=4)
    tokenizer = Tokenizer()
    vocab = build_vocabulary([tokenizer.tokenize(t) for t in dataset.texts])
    split = encode_split(dataset, vocab)
    assert len(split) == 64
    cfg = TrainConfig.for_task("t1", embed_dim=16, rnn_hidden=16, fc_hidden=16, epochs=200, batch_size=64,
                               learning_rate=1e-2, min_count=1)
    matrix = np.random.default_rng(0).uniform(-0.05, 0.05, (vocab.size, 16)).astype(np.float32)
    model, _ = train_model("rcnn", cfg, split, split, vocab, matrix, seed=0)
    assert evaluate(model, split).accuracy == 1.0


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

def test_t1_report(prepared_dir, tmp_path):
    out = str(tmp_path / "run")
    report = run_experiment_t1(prepared_dir, tiny_cfg(), seed=7, out_dir=out)
    assert report.task == "t1" and report.model == "rcnn"
    result = report.categories["Books"]
    assert result.test_size == result.confusion.total == 12
    assert result.accuracy == result.confusion.accuracy
    assert result.final_accuracy == result.final_confusion.accuracy
    assert result.training_size == 108
    assert 1 <= result.selected_epoch <= 2
    assert report.overrides["embed_dim"] == 8
    for name in ("report.json", "report.txt", "Books.rcnn.ckpt", "Books.rcnn.ckpt.vocab"):
        assert os.path.exists(os.path.join(out, name))
    loaded = ExperimentReport.load(os.path.join(out, "report.json"))
    assert loaded.to_dict() == report.to_dict()


def test_t1_is_reproducible(prepared_dir):
    a = run_experiment_t1(prepared_dir, tiny_cfg(), seed=7)
    b = run_experiment_t1(prepared_dir, tiny_cfg(), seed=7)
    assert a.to_json() == b.to_json()
    assert a.config_fingerprint == b.config_fingerprint
    assert run_experiment_t1(prepared_dir, tiny_cfg(), seed=8).config_fingerprint != a.config_fingerprint


def test_t2_report(prepared_dir, tmp_path):
    out = str(tmp_path / "run")
    report = run_experiment_t2(prepared_dir, tiny_cfg("t2"), skipgram_cfg=TINY_SKIPGRAM, seed=1, out_dir=out)
    result = report.categories["Books"]
    assert report.task == "t2"
    assert result.training_size == 108 + 200
    assert report.data_manifest["Books"]["unlabeled"] == 200
    assert os.path.exists(os.path.join(out, "Books.embeddings"))


def test_skipgram_corpus_excludes_test_split(prepared_dir):
    prepared = load_prepared(prepared_dir)
    texts = skipgram_corpus(prepared)
    assert len(texts) == 108 + 200
    assert not set(texts) & set(prepared.splits["test"].texts)


def test_test_text_cannot_reach_embedding_training(prepared_dir):
    prepared = load_prepared(prepared_dir)
    leaked = prepared.splits["test"].texts[0]
    with pytest.raises(ProvenanceError) as info:
        build_embedding_table(prepared, TINY_SKIPGRAM, extra_texts=[leaked])
    assert info.value.context["stage"] == "skip-gram training"


def _resplit(prepared):
    """Same texts, but the old training split is now held out for testing."""
    splits = {"train": prepared.splits["test"], "validation": prepared.splits["validation"],
              "test": prepared.splits["train"]}
    return PreparedData(directory=prepared.directory, category=prepared.category, splits=splits,
                        pool=prepared.pool)


def test_supplied_table_trained_on_test_texts_is_refused(prepared_dir, tmp_path):
    prepared = load_prepared(prepared_dir)
    table = build_embedding_table(prepared, TINY_SKIPGRAM, seed=0)
    path = str(tmp_path / "books.emb")
    save_table(table, path)
    with pytest.raises(ProvenanceError) as info:
        run_experiment_t2(_resplit(prepared), tiny_cfg("t2"), tables=load_table(path), seed=0)
    assert info.value.context["stage"] == "skip-gram training"
    assert info.value.context["documents"] == len(set(prepared.splits["train"].texts))


def test_supplied_table_from_same_splits_is_accepted(prepared_dir, tmp_path):
    prepared = load_prepared(prepared_dir)
    path = str(tmp_path / "books.emb")
    save_table(build_embedding_table(prepared, TINY_SKIPGRAM, seed=0), path)
    report = run_experiment_t2(prepared, tiny_cfg("t2"), tables=load_table(path), seed=0)
    assert report.categories["Books"].test_size == 12


def test_supplied_table_without_corpus_record_is_refused(prepared_dir):
    prepared = load_prepared(prepared_dir)
    table = build_embedding_table(prepared, TINY_SKIPGRAM, seed=0)
    table.corpus_digests = None
    with pytest.raises(ProvenanceError):
        run_experiment_t2(prepared, tiny_cfg("t2"), tables={"Books": table}, seed=0)


def test_provenance_guard():
    guard = ProvenanceGuard(["held out text"])
    assert guard.check(["other text"], "vocabulary construction") == ["other text"]
    with pytest.raises(ProvenanceError):
        guard.check(["other text", "held out text"], "vocabulary construction")


def test_model_comparison(prepared_dir):
    reports = run_model_comparison(prepared_dir, tiny_cfg(), models=("linear", "svm"), seed=0)
    assert set(reports) == {"linear", "svm"}
    assert reports["svm"].model == "svm"
    frame = model_comparison_table(reports)
    assert list(frame["Category"]) == ["Books", "Overall"]
    assert 0 <= frame["svm"].iloc[0] <= 100


# ---------------------------------------------------------------------------
# Comparison
# ---------------------------------------------------------------------------

def test_compare_identical_reports():
    t1, _ = reference_reports()
    table = compare_reports(t1, t1)
    assert set(table.deltas.values()) == {0.0}
    assert table.overall_delta == 0.0
    assert table.label_a.endswith("(a)") and table.label_b.endswith("(b)")


def test_compare_published_reports():
    t1, t2 = reference_reports()
    table = compare_reports(t1, t2)
    assert table.deltas == pytest.approx({"Books": 5.0, "Electronics": 5.0, "CDsAndVinyl": 6.0,
                                          "MoviesAndTV": 6.0})
    assert table.overall_a == pytest.approx(83.25)
    assert table.overall_b == pytest.approx(88.75)
    assert table.overall_delta == pytest.approx(5.5)
    assert list(table.frame["Category"])[-1] == "Overall"
    for report in (t1, t2):
        for result in report.categories.values():
            assert result.confusion.accuracy == pytest.approx(result.accuracy)
    assert json.loads(json.dumps(table.to_dict()))["b"] == "T2 rcnn"


def test_compare_missing_category():
    t1, t2 = reference_reports()
    partial = ExperimentReport(task="t2", model="rcnn",
                               categories={k: v for k, v in t2.categories.items() if k != "Books"})
    with pytest.raises(MissingCategory):
        compare_reports(t1, partial)


# ---------------------------------------------------------------------------
# Semi-supervised initialization on held-out synonyms
# ---------------------------------------------------------------------------

def _synonym_words(rng, n):
    letters = list("bcdfghjklmnpqrstvwxz")
    return ["".join(rng.choice(letters, size=6)) + "o" for _ in range(n)]


def _synonym_setup(seed):
    """
    Labeled splits whose test texts use only class words never seen in training; the
    unlabeled pool mixes seen and unseen class words of the same class.
    """
    rng = np.random.default_rng(seed)
    words = _synonym_words(rng, 32)
    seen = {HelpfulnessLabel.HELPFUL: words[0:8], HelpfulnessLabel.UNHELPFUL: words[8:16]}
    unseen = {HelpfulnessLabel.HELPFUL: words[16:24], HelpfulnessLabel.UNHELPFUL: words[24:32]}

    def text(label, vocabularies):
        toks = list(rng.choice(FILLER, size=7))
        for vocab in vocabularies:
            toks += list(rng.choice(vocab[label], size=3 // len(vocabularies) + 1))
        rng.shuffle(toks)
        return " ".join(str(t) for t in toks)

    def dataset(n, vocabularies, prefix):
        examples = []
        for label in HelpfulnessLabel:
            for i in range(n):
                record = make_record("", reviewer=f"{prefix}{label.index}-{i}", item=f"{seed}")
                examples.append(LabeledExample(text(label, vocabularies) + f" {prefix}{i}", label, record))
        return LabeledDataset(examples=tuple(examples), category="Books")

    splits = {"train": dataset(120, [seen], "tr"), "validation": dataset(30, [seen], "va"),
              "test": dataset(50, [unseen], "te")}
    pool = UnlabeledPool(texts=tuple(text(label, [seen, unseen]) for label in list(HelpfulnessLabel) * 1000),
                         category="Books")
    return PreparedData(directory="", category="Books", splits=splits, pool=pool)


@pytest.mark.slow
@pytest.mark.parametrize("freeze", [True, False])
def test_pretrained_embeddings_generalize_to_unseen_words(freeze):
    skipgram = SkipgramConfig(dim=16, window=5, negatives=5, subsample_t=1.0, epochs=5, initial_lr=0.05,
                              min_count=1, bucket_count=2 ** 12)
    common = dict(embed_dim=16, rnn_hidden=16, fc_hidden=16, epochs=3, batch_size=32, min_count=1,
                  learning_rate=1e-2, freeze_embeddings=freeze)
    wins = 0
    for seed in range(5):
        prepared = _synonym_setup(seed)
        t1 = run_experiment_t1(prepared, TrainConfig.for_task("t1", **common), seed=seed)
        t2 = run_experiment_t2(prepared, TrainConfig.for_task("t2", **common), skipgram_cfg=skipgram, seed=seed)
        wins += t2.overall >= t1.overall
    assert wins >= 4
