"""
Text preparation: tokenization, vocabularies, id sequences, subword hashing and TF-IDF.
"""

import html
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from scipy import sparse

from errors import CorruptTable, EmptyCorpus

logger = logging.getLogger(__name__)

PAD = 0
UNK = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)
TAG_RE = re.compile(r"</?[A-Za-z][^<>]*>")


@dataclass(frozen=True)
class Tokenizer:
    """Unicode letter/digit runs; punctuation and underscores separate tokens."""
    lowercase: bool = True
    strip_html: bool = True

    def tokenize(self, text):
        if not text:
            return []
        if self.strip_html:
            text = html.unescape(TAG_RE.sub(" ", text))
        if self.lowercase:
            text = text.lower()
        return TOKEN_RE.findall(text)

    __call__ = tokenize


def tokenize(text, tokenizer=None):
    return (tokenizer or Tokenizer()).tokenize(text)


class Vocabulary:
    """
    Dense token ids with PAD=0 and UNK=1.

    Kept tokens are ordered by (frequency desc, token asc) so ids do not depend on
    corpus order or on how frequency counts were merged.
    """

    def __init__(self, tokens, counts=None, min_count=1):
        self.id_to_token = [PAD_TOKEN, UNK_TOKEN] + list(tokens)
        self.token_to_id = {tok: i for i, tok in enumerate(self.id_to_token)}
        self.counts = dict(counts or {})
        self.min_count = min_count

    @property
    def size(self):
        return len(self.id_to_token)

    def __len__(self):
        return self.size

    def __contains__(self, token):
        return token in self.token_to_id and self.token_to_id[token] > UNK

    def get(self, token):
        return self.token_to_id.get(token, UNK)

    def token(self, idx):
        return self.id_to_token[idx]

    @property
    def words(self):
        """Kept tokens without the specials, in id order."""
        return self.id_to_token[2:]

    def save(self, path):
        """Write "token<TAB>id<TAB>count" lines after a header line."""
        with open(path, "w", encoding="utf-8") as f:
            f.write(f"#vocab\tmin_count={self.min_count}\tpad={PAD}\tunk={UNK}\n")
            for idx, tok in enumerate(self.id_to_token):
                f.write(f"{tok}\t{idx}\t{self.counts.get(tok, 0)}\n")

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as f:
            header = f.readline().rstrip("\n").split("\t")
            if not header or header[0] != "#vocab":
                raise CorruptTable(f"{path}: missing vocabulary header")
            meta = dict(part.split("=", 1) for part in header[1:] if "=" in part)
            tokens, counts = [], {}
            for line_number, line in enumerate(f, start=2):
                parts = line.rstrip("\n").split("\t")
                if len(parts) != 3:
                    raise CorruptTable(f"{path}:{line_number}: expected 3 tab-separated fields")
                tok, idx, count = parts
                if int(idx) != line_number - 2:
                    raise CorruptTable(f"{path}:{line_number}: ids are not dense")
                tokens.append(tok)
                counts[tok] = int(count)
        if tokens[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise CorruptTable(f"{path}: PAD/UNK must hold ids 0 and 1")
        return cls(tokens[2:], counts={t: c for t, c in counts.items() if c},
                   min_count=int(meta.get("min_count", 1)))


def count_tokens(corpus):
    counts = Counter()
    for tokens in corpus:
        counts.update(tokens)
    return counts


def build_vocabulary(corpus, min_count=1, counts=None):
    """
    Build a Vocabulary from an iterable of token lists.

    Parameters:
    -----------
    corpus : iterable of list of str
        Tokenized documents (ignored when counts is given)
    min_count : int
        Minimum corpus frequency for a token to be kept
    counts : Counter, optional
        Pre-merged frequency map, e.g. summed from parallel workers

    Returns:
    --------
    Vocabulary
    """
    if counts is None:
        counts = count_tokens(corpus)
    if not counts:
        raise EmptyCorpus("cannot build a vocabulary from an empty corpus")
    kept = [(tok, c) for tok, c in counts.items()
            if c >= min_count and tok not in (PAD_TOKEN, UNK_TOKEN)]
    kept.sort(key=lambda tc: (-tc[1], tc[0]))
    vocab = Vocabulary([t for t, _ in kept], counts=dict(kept), min_count=min_count)
    logger.info("Vocabulary: %d tokens kept of %d distinct (min_count=%d)",
                vocab.size - 2, len(counts), min_count)
    return vocab


def fnv1a_32(data):
    """32-bit FNV-1a over bytes."""
    h = 2166136261
    for b in data:
        h ^= b
        h = (h * 16777619) & 0xFFFFFFFF
    return h


@dataclass(frozen=True)
class SubwordHasher:
    """Character n-grams of "<word>" hashed into a fixed number of buckets."""
    n_min: int = 3
    n_max: int = 6
    bucket_count: int = 2 ** 18

    def ngrams(self, word):
        wrapped = f"<{word}>"
        grams = []
        for n in range(self.n_min, self.n_max + 1):
            for i in range(len(wrapped) - n + 1):
                grams.append(wrapped[i:i + n])
        # the whole bracketed word is a feature of its own
        if len(wrapped) > self.n_max:
            grams.append(wrapped)
        return grams

    def hash(self, gram):
        return fnv1a_32(gram.encode("utf-8")) % self.bucket_count

    def ids(self, word):
        return [self.hash(g) for g in self.ngrams(word)]


def subword_ngrams(word, hasher=SubwordHasher()):
    """Hashed n-gram ids of word, in n-then-position order."""
    return hasher.ids(word)


@dataclass(frozen=True)
class EncodedSequence:
    ids: Tuple[int, ...]
    length: int
    label: Optional[object] = None
    # positions (< length) whose tokens were out of vocabulary, with the original token
    oov: Tuple[Tuple[int, str], ...] = ()

    @property
    def is_empty(self):
        return self.length == 0

    def padded(self, width):
        out = np.full(width, PAD, dtype=np.int64)
        n = min(self.length, width)
        out[:n] = self.ids[:n]
        return out


def encode(tokens, vocab, max_len=500, label=None):
    """Map tokens to ids, truncating to max_len; unknown tokens become UNK."""
    kept = list(tokens[:max_len])
    ids = []
    oov = []
    for pos, tok in enumerate(kept):
        idx = vocab.get(tok)
        if idx == UNK:
            oov.append((pos, tok))
        ids.append(idx)
    return EncodedSequence(ids=tuple(ids), length=len(ids), label=label, oov=tuple(oov))


def pad_batch(sequences, width=None):
    """Stack sequences into an int64 (batch, width) id matrix plus a lengths vector."""
    lengths = np.array([s.length for s in sequences], dtype=np.int64)
    width = width or (int(lengths.max()) if len(lengths) else 0)
    ids = np.full((len(sequences), max(width, 1)), PAD, dtype=np.int64)
    for i, s in enumerate(sequences):
        n = min(s.length, width)
        ids[i, :n] = s.ids[:n]
    return ids, lengths


@dataclass
class IdfTable:
    """Smoothed inverse document frequencies, fit on the training split."""
    idf: np.ndarray
    n_docs: int
    df: Dict[int, int] = field(default_factory=dict)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            f.write(f"#idf\tn_docs={self.n_docs}\tsize={len(self.idf)}\n")
            for idx, value in enumerate(self.idf):
                f.write(f"{idx}\t{self.df.get(idx, 0)}\t{float(value)!r}\n")

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as f:
            header = f.readline().rstrip("\n").split("\t")
            if not header or header[0] != "#idf":
                raise CorruptTable(f"{path}: missing idf header")
            meta = dict(part.split("=", 1) for part in header[1:] if "=" in part)
            size = int(meta["size"])
            idf = np.zeros(size, dtype=np.float64)
            df = {}
            for line in f:
                idx, d, value = line.rstrip("\n").split("\t")
                idf[int(idx)] = float(value)
                if int(d):
                    df[int(idx)] = int(d)
        return cls(idf=idf, n_docs=int(meta["n_docs"]), df=df)


def fit_idf(corpus, vocab):
    """
    idf(t) = ln((1 + N) / (1 + df(t))) + 1 over the given documents.

    The caller passes training documents only.
    """
    df = Counter()
    n_docs = 0
    for tokens in corpus:
        n_docs += 1
        df.update({vocab.get(t) for t in tokens if t in vocab})
    idf = np.zeros(vocab.size, dtype=np.float64)
    counts = np.zeros(vocab.size, dtype=np.float64)
    for idx, d in df.items():
        counts[idx] = d
    idf[2:] = np.log((1.0 + n_docs) / (1.0 + counts[2:])) + 1.0
    return IdfTable(idf=idf, n_docs=n_docs, df=dict(df))


def tfidf_vector(tokens, vocab, idf_table):
    """
    L2-normalized TF-IDF row for one document as a 1 x |V| csr_matrix.

    tf is the raw count divided by document length; out-of-vocabulary tokens have no
    coordinate. Empty documents give the zero vector.
    """
    size = vocab.size
    if not tokens:
        return sparse.csr_matrix((1, size), dtype=np.float64)
    counts = Counter(vocab.get(t) for t in tokens if t in vocab)
    if not counts:
        return sparse.csr_matrix((1, size), dtype=np.float64)
    cols = np.array(sorted(counts), dtype=np.int64)
    tf = np.array([counts[c] for c in cols], dtype=np.float64) / len(tokens)
    values = tf * idf_table.idf[cols]
    norm = np.linalg.norm(values)
    if norm > 0:
        values = values / norm
    return sparse.csr_matrix((values, (np.zeros(len(cols), dtype=np.int64), cols)),
                             shape=(1, size))


def tfidf_matrix(documents, vocab, idf_table):
    """Stack TF-IDF rows for many documents."""
    rows = [tfidf_vector(tokens, vocab, idf_table) for tokens in documents]
    if not rows:
        return sparse.csr_matrix((0, vocab.size), dtype=np.float64)
    return sparse.vstack(rows, format="csr")
