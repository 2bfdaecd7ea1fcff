"""
Command-line tests: exit codes, JSON output and an end-to-end prepare/train/eval/predict run.
"""

import json
import os

import numpy as np
import pytest

from conftest import review_line, synthetic_text
from main import build_parser, dispatch
from review_corpus import HelpfulnessLabel
from text_pipeline import build_vocabulary

TINY_TRAIN = ["--epochs", "1", "--embed-dim", "8", "--rnn-hidden", "8", "--fc-hidden", "8",
              "--min-count", "1", "--batch-size", "16"]


def _json_out(capsys):
    return json.loads(capsys.readouterr().out)


def _last_error(capsys):
    lines = [line for line in capsys.readouterr().err.splitlines() if line.strip()]
    return json.loads(lines[-1])


@pytest.fixture
def corpus(write_reviews):
    rng = np.random.default_rng(0)
    lines = []
    for i in range(40):
        lines.append(review_line(synthetic_text(rng, HelpfulnessLabel.HELPFUL), helpful=(18, 20),
                                 reviewer=f"H{i}", asin=f"A{i}"))
        lines.append(review_line(synthetic_text(rng, HelpfulnessLabel.UNHELPFUL), helpful=(2, 20),
                                 reviewer=f"U{i}", asin=f"B{i}"))
    for i in range(10):
        lines.append(review_line(synthetic_text(rng, HelpfulnessLabel.HELPFUL), reviewer=f"Z{i}", asin=f"C{i}"))
    lines.append(review_line("so so", helpful=(10, 20), reviewer="M", asin="M"))
    return write_reviews(lines)


@pytest.fixture
def prepared(corpus, tmp_path, capsys):
    out = str(tmp_path / "prepared")
    code = dispatch(["prepare", "--input", corpus, "--category", "books", "--per-class", "30",
                     "--unlabeled", "5", "--out", out, "--seed", "3", "--json"])
    assert code == 0
    return out, _json_out(capsys)


def test_prepare_writes_splits_and_manifest(prepared):
    out, counts = prepared
    assert counts["category"] == "Books"
    assert counts["train"] + counts["validation"] + counts["test"] == 60
    assert counts["test"] == 6
    assert counts["unlabeled"] == 5
    assert counts["tallies"]["reject_ambiguous_ratio"] == 1
    for name in ("train.jsonl", "validation.jsonl", "test.jsonl", "unlabeled.jsonl", "manifest.json"):
        assert os.path.exists(os.path.join(out, name))
    with open(os.path.join(out, "manifest.json"), encoding="utf-8") as f:
        manifest = json.load(f)
    assert manifest["command"] == "prepare"
    assert manifest["seed"] == 3
    assert set(manifest["outputs"]) >= {"train.jsonl", "test.jsonl"}


def test_prepare_is_reproducible(corpus, tmp_path):
    outs = []
    for name in ("a", "b"):
        out = str(tmp_path / name)
        assert dispatch(["prepare", "--input", corpus, "--per-class", "30", "--unlabeled", "0",
                         "--out", out, "--seed", "9"]) == 0
        with open(os.path.join(out, "test.jsonl"), encoding="utf-8") as f:
            outs.append(f.read())
    assert outs[0] == outs[1]


def test_stats_with_plot(corpus, tmp_path, capsys):
    plot = str(tmp_path / "votes.png")
    assert dispatch(["stats", "--input", corpus, "--plot", plot, "--json"]) == 0
    stats = _json_out(capsys)
    assert stats["total"] == 91
    assert os.path.exists(plot)


def test_train_eval_predict(prepared, tmp_path, capsys):
    data, _ = prepared
    runs = str(tmp_path / "runs")
    curves = str(tmp_path / "curves.png")
    assert dispatch(["train", "--task", "t1", "--data", data, "--out", runs, "--plot", curves, "--json"]
                    + TINY_TRAIN) == 0
    report = _json_out(capsys)
    assert report["task"] == "t1"
    assert "Books" in report["categories"]
    assert os.path.exists(os.path.join(runs, "manifest.json"))
    assert os.path.exists(curves)

    checkpoint = os.path.join(runs, "Books.rcnn.ckpt")
    assert dispatch(["eval", "--model", checkpoint, "--data", data, "--json"]) == 0
    evaluation = _json_out(capsys)
    assert evaluation["test_size"] == 6
    assert evaluation["accuracy"] == report["categories"]["Books"]["accuracy"]

    assert dispatch(["predict", "--model", checkpoint, "--text", "clear and useful", "--json"]) == 0
    prediction = _json_out(capsys)
    assert prediction["label"] in ("helpful", "unhelpful")
    assert 0.5 <= prediction["confidence"] <= 1.0

    texts = tmp_path / "texts.txt"
    texts.write_text("clear and useful\nqqqq zzzz\n", encoding="utf-8")
    assert dispatch(["predict", "--model", checkpoint, "--input", str(texts), "--json"]) == 0
    predictions = _json_out(capsys)
    assert [p["low_confidence"] for p in predictions] == [False, True]

    assert dispatch(["predict", "--model", checkpoint, "--vocab", checkpoint + ".vocab",
                     "--text", "clear and useful", "--json"]) == 0
    assert _json_out(capsys) == prediction

    other = str(tmp_path / "other.vocab")
    build_vocabulary([["unrelated", "words"]]).save(other)
    assert dispatch(["predict", "--model", checkpoint, "--vocab", other, "--text", "clear"]) == 1
    assert _last_error(capsys)["error"] == "AlignmentError"


def test_config_file_seed_is_kept(prepared, tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("HELPRANK_SEED", raising=False)
    data, _ = prepared
    cfg = tmp_path / "train.cfg"
    cfg.write_text("seed = 42\nepochs = 1\n", encoding="utf-8")

    def run(name, *extra):
        out = str(tmp_path / name)
        assert dispatch(["train", "--model", "linear", "--data", data, "--out", out, "--config", str(cfg),
                         "--json"] + TINY_TRAIN + list(extra)) == 0
        report = _json_out(capsys)
        with open(os.path.join(out, "manifest.json"), encoding="utf-8") as f:
            assert json.load(f)["seed"] == report["config"]["seed"]
        return report["config"]["seed"]

    assert run("from_file") == 42
    assert run("from_flag", "--seed", "5") == 5
    monkeypatch.setenv("HELPRANK_SEED", "11")
    assert run("from_env") == 11


def test_embed_then_t2(prepared, tmp_path, capsys):
    data, _ = prepared
    table = str(tmp_path / "books.emb")
    assert dispatch(["embed", "--data", data, "--out", table, "--dim", "8", "--epochs", "1",
                     "--min-count", "1", "--neighbors", "clear", "--json"]) == 0
    result = _json_out(capsys)
    assert result["dim"] == 8
    assert len(result["neighbors"]) == 10
    assert os.path.exists(table + ".manifest.json")

    runs = str(tmp_path / "t2")
    assert dispatch(["train", "--task", "t2", "--data", data, "--embeddings", table, "--out", runs, "--json"]
                    + TINY_TRAIN) == 0
    report = _json_out(capsys)
    assert report["task"] == "t2"
    assert report["data_manifest"]["Books"]["unlabeled"] == 5


def test_embed_with_separate_unlabeled_pool(prepared, tmp_path, capsys):
    data, _ = prepared
    flags = ["--dim", "8", "--epochs", "1", "--min-count", "1", "--bucket-count", "256", "--json"]
    assert dispatch(["embed", "--labeled", data, "--out", str(tmp_path / "a.emb")] + flags) == 0
    base = _json_out(capsys)

    with open(os.path.join(data, "unlabeled.jsonl"), encoding="utf-8") as f:
        pool_lines = f.read().splitlines()
    pool_lines.append(json.dumps({"text": "zebraword quokkaword", "category": "Books"}))
    pool = tmp_path / "extra_pool.jsonl"
    pool.write_text("\n".join(pool_lines) + "\n", encoding="utf-8")

    table = str(tmp_path / "b.emb")
    assert dispatch(["embed", "--labeled", data, "--unlabeled", str(pool), "--out", table] + flags) == 0
    assert _json_out(capsys)["words"] == base["words"] + 2
    with open(table + ".manifest.json", encoding="utf-8") as f:
        assert str(pool) in json.load(f)["inputs"]


def test_compare_reference(capsys, tmp_path):
    plot = str(tmp_path / "compare.png")
    assert dispatch(["compare", "--reference", "--plot", plot, "--json"]) == 0
    table = _json_out(capsys)
    assert table["a"] == "T1 rcnn" and table["b"] == "T2 rcnn"
    assert table["overall_delta"] == pytest.approx(5.5)
    assert os.path.exists(plot)


def test_compare_needs_two_reports(capsys):
    assert dispatch(["compare", "only_one.json"]) == 2


def test_compare_missing_report_file(tmp_path, capsys):
    missing = str(tmp_path / "nope.json")
    assert dispatch(["compare", missing, missing]) == 1
    assert _last_error(capsys)["error"] == "IoError"


def test_validate(capsys, tmp_path):
    assert dispatch(["validate", "--task", "t2", "--json"]) == 0
    assert _json_out(capsys)["valid"] is True

    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"learning_rate": -1}), encoding="utf-8")
    assert dispatch(["validate", "--config", str(bad)]) == 1
    assert _last_error(capsys)["error"] == "HelprankError"

    unknown = tmp_path / "unknown.json"
    unknown.write_text(json.dumps({"no_such_key": 1}), encoding="utf-8")
    assert dispatch(["validate", "--config", str(unknown)]) == 1
    assert _last_error(capsys)["error"] == "ConfigError"


def test_usage_errors(capsys):
    assert dispatch([]) == 2
    assert dispatch(["prepare", "--out", "x"]) == 2
    assert dispatch(["train", "--data", "d", "--out", "o", "--model", "transformer"]) == 2
    assert dispatch(["predict", "--model", "m", "--text", "a", "--input", "b"]) == 2


def test_unreadable_input(tmp_path, capsys):
    missing = str(tmp_path / "missing.jsonl")
    assert dispatch(["stats", "--input", missing, "--json"]) == 1
    err = _last_error(capsys)
    assert err["error"] == "IoError"
    assert err["path"] == missing


def test_malformed_input(write_reviews, capsys):
    path = write_reviews([review_line(helpful=(1, 2)), "{broken"])
    assert dispatch(["stats", "--input", path]) == 1
    err = _last_error(capsys)
    assert err["error"] == "ParseError"
    assert err["line_number"] == 2

    assert dispatch(["stats", "--input", path, "--skip-bad-lines", "--json"]) == 0
    stats = _json_out(capsys)
    assert stats["total"] == 1
    assert stats["skipped_lines"] == {"ParseError": 1}


@pytest.mark.parametrize("command,flags", [
    ("prepare", ["--input", "--per-class", "--unlabeled", "--out", "--seed"]),
    ("stats", ["--input", "--plot"]),
    ("embed", ["--labeled", "--data", "--unlabeled", "--dim", "--bucket-count", "--export-text"]),
    ("train", ["--task", "--model", "--embeddings", "--embed-dim", "--rnn-hidden"]),
    ("eval", ["--model", "--data"]),
    ("predict", ["--text", "--input", "--vocab", "--embeddings"]),
    ("compare", ["--reference", "--plot"]),
    ("validate", ["--section", "--n-train"]),
])
def test_help_lists_flags(command, flags, capsys):
    assert dispatch([command, "--help"]) == 0
    text = capsys.readouterr().out
    for flag in flags:
        assert flag in text


def test_parser_defaults():
    args = build_parser().parse_args(["train", "--data", "d", "--out", "o"])
    assert (args.task, args.model, args.epochs, args.seed) == ("t1", "rcnn", None, None)
