"""
Tests for tokenization, vocabularies, encoding, subword hashing and TF-IDF.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from errors import CorruptTable, EmptyCorpus
from text_pipeline import (PAD, UNK, IdfTable, SubwordHasher, Tokenizer, Vocabulary, build_vocabulary,
                           encode, fit_idf, fnv1a_32, pad_batch, subword_ngrams, tfidf_matrix,
                           tfidf_vector, tokenize)


def test_tokenize_basic():
    assert tokenize("Great book!! Worth_it, 10/10.") == ["great", "book", "worth", "it", "10", "10"]


def test_tokenize_html_and_unicode():
    assert tokenize("<br />Caf&eacute; <b>crème</b>") == ["café", "crème"]
    assert tokenize("") == []
    assert Tokenizer(lowercase=False).tokenize("ABC def") == ["ABC", "def"]


@pytest.mark.parametrize("text,expected", [
    ("Battery life < 2 hours and the screen is dim > not worth it",
     ["battery", "life", "2", "hours", "and", "the", "screen", "is", "dim", "not", "worth", "it"]),
    ("I'd rate it 4 &lt; 5 because the manual &gt; useless",
     ["i", "d", "rate", "it", "4", "5", "because", "the", "manual", "useless"]),
    ("a &lt;b&gt;bold&lt;/b&gt; claim", ["a", "b", "bold", "b", "claim"]),
    ("great<p>value</p>", ["great", "value"]),
])
def test_comparison_signs_are_not_tags(text, expected):
    assert tokenize(text) == expected


def test_vocabulary_order_and_specials():
    vocab = build_vocabulary([["b", "a", "c"], ["a", "b"], ["a"]], min_count=1)
    assert vocab.token(PAD) == "<pad>" and vocab.token(UNK) == "<unk>"
    assert vocab.words == ["a", "b", "c"]
    assert vocab.get("a") == 2
    assert vocab.get("missing") == UNK
    assert "a" in vocab and "<unk>" not in vocab


def test_vocabulary_min_count_and_tie_break():
    vocab = build_vocabulary([["z", "y", "x", "x"]], min_count=1)
    assert vocab.words == ["x", "y", "z"]
    assert build_vocabulary([["z", "y", "x", "x"]], min_count=2).words == ["x"]


def test_vocabulary_independent_of_document_order():
    docs = [["a", "b"], ["c", "a"], ["b", "b", "d"]]
    assert build_vocabulary(docs).words == build_vocabulary(list(reversed(docs))).words


def test_empty_corpus():
    with pytest.raises(EmptyCorpus):
        build_vocabulary([])
    with pytest.raises(EmptyCorpus):
        build_vocabulary([[], []])


def test_vocabulary_save_load(tmp_path):
    vocab = build_vocabulary([["great", "book", "great"], ["bad"]], min_count=1)
    path = str(tmp_path / "v.vocab")
    vocab.save(path)
    loaded = Vocabulary.load(path)
    assert loaded.id_to_token == vocab.id_to_token
    assert loaded.counts == vocab.counts
    (tmp_path / "bad.vocab").write_text("not a vocab\n")
    with pytest.raises(CorruptTable):
        Vocabulary.load(str(tmp_path / "bad.vocab"))


def test_encode_truncates_and_marks_oov():
    vocab = build_vocabulary([["good", "book"]])
    seq = encode(["good", "weird", "book", "good"], vocab, max_len=3, label=0)
    assert seq.ids == (vocab.get("good"), UNK, vocab.get("book"))
    assert seq.length == 3
    assert seq.oov == ((1, "weird"),)
    assert seq.label == 0
    assert encode([], vocab).is_empty


def test_pad_batch():
    vocab = build_vocabulary([["a", "b", "c"]])
    ids, lengths = pad_batch([encode(["a", "b", "c"], vocab), encode(["c"], vocab)])
    assert ids.shape == (2, 3)
    assert list(lengths) == [3, 1]
    assert list(ids[1]) == [vocab.get("c"), PAD, PAD]


def test_fnv1a_reference_values():
    assert fnv1a_32(b"") == 2166136261
    assert fnv1a_32(b"a") == 0xE40C292C
    assert fnv1a_32(b"foobar") == 0xBF9CF968


def test_subword_ngrams():
    hasher = SubwordHasher(n_min=3, n_max=4, bucket_count=1000)
    assert hasher.ngrams("cat") == ["<ca", "cat", "at>", "<cat", "cat>", "<cat>"]
    ids = subword_ngrams("cat", hasher)
    assert len(ids) == 6
    assert all(0 <= i < 1000 for i in ids)
    assert ids == subword_ngrams("cat", hasher)


def test_whole_word_gram_is_not_repeated():
    hasher = SubwordHasher(n_min=3, n_max=6)
    grams = hasher.ngrams("cat")
    assert grams.count("<cat>") == 1
    assert grams[-1] == "cat>"
    assert hasher.ngrams("computer")[-1] == "<computer>"


@settings(max_examples=100, deadline=None)
@given(st.text(alphabet="abcdefghijklmnopqrstuvwxyzé", min_size=1, max_size=12))
def test_subword_count(word):
    hasher = SubwordHasher()
    wrapped = len(word) + 2
    expected = sum(max(0, wrapped - n + 1) for n in range(3, 7)) + (wrapped > 6)
    assert len(hasher.ids(word)) == expected


def test_tfidf_vector():
    docs = [["good", "good", "book"], ["bad", "book"]]
    vocab = build_vocabulary(docs)
    idf = fit_idf(docs, vocab)
    assert idf.n_docs == 2
    # book appears in both documents: ln(3/3) + 1
    assert idf.idf[vocab.get("book")] == pytest.approx(1.0)
    assert idf.idf[vocab.get("good")] == pytest.approx(np.log(1.5) + 1.0)
    row = tfidf_vector(["good", "good", "book", "unknown"], vocab, idf)
    assert row.shape == (1, vocab.size)
    assert np.linalg.norm(row.toarray()) == pytest.approx(1.0)
    dense = row.toarray()[0]
    ratio = dense[vocab.get("good")] / dense[vocab.get("book")]
    assert ratio == pytest.approx(2 * (np.log(1.5) + 1.0))


def test_tfidf_empty_and_all_oov():
    vocab = build_vocabulary([["a"]])
    idf = fit_idf([["a"]], vocab)
    assert tfidf_vector([], vocab, idf).nnz == 0
    assert tfidf_vector(["zzz"], vocab, idf).nnz == 0
    assert tfidf_matrix([["a"], []], vocab, idf).shape == (2, vocab.size)


def test_idf_save_load(tmp_path):
    docs = [["a", "b"], ["a"]]
    vocab = build_vocabulary(docs)
    idf = fit_idf(docs, vocab)
    path = str(tmp_path / "t.idf")
    idf.save(path)
    loaded = IdfTable.load(path)
    assert np.array_equal(loaded.idf, idf.idf)
    assert loaded.n_docs == 2
    assert loaded.df == idf.df
