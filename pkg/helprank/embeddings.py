"""
Word-vector look-up tables: random-uniform initialization and skip-gram with
negative sampling over words and hashed character n-grams.
"""

import hashlib
import logging
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from config import SkipgramConfig
from errors import AlignmentError, CorruptCheckpoint, CorruptTable, EmptyCorpus
from numerics import ParamSet, load_checkpoint, save_checkpoint, sigmoid
from text_pipeline import PAD, UNK, SubwordHasher, Vocabulary, build_vocabulary

logger = logging.getLogger(__name__)

RANDOM_UNIFORM = "random_uniform"
SKIPGRAM_SUBWORD = "skipgram_subword"
EMBEDDING_MODES = (RANDOM_UNIFORM, SKIPGRAM_SUBWORD)


def vocab_checksum(vocab):
    """SHA-256 over the id-ordered token list."""
    return hashlib.sha256("\n".join(vocab.id_to_token).encode("utf-8")).hexdigest()


@dataclass
class EmbeddingTable:
    mode: str
    vocab: Vocabulary
    word_vectors: np.ndarray
    subword_vectors: Optional[np.ndarray] = None
    hasher: Optional[SubwordHasher] = None
    history: List[float] = field(default_factory=list)
    # SHA-256 of every text the table was trained on; None when unrecorded
    corpus_digests: Optional[frozenset] = None

    @property
    def dim(self):
        return int(self.word_vectors.shape[1])

    @property
    def checksum(self):
        return vocab_checksum(self.vocab)

    def subword_ids(self, word):
        return np.asarray(self.hasher.ids(word), dtype=np.int64)

    def composed_matrix(self):
        """Vectors of every vocabulary id as word_vector would return them; PAD stays zero."""
        if self.mode == RANDOM_UNIFORM:
            return self.word_vectors.copy()
        out = np.zeros_like(self.word_vectors)
        for idx, tok in enumerate(self.vocab.id_to_token):
            if idx in (PAD, UNK):
                continue
            out[idx] = word_vector(tok, self)
        return out


def init_random_uniform(vocab, dim=256, seed=0, scale=0.05, dtype=np.float32):
    """
    Table with every entry i.i.d. uniform in [-scale, scale] and a zero PAD row.

    Parameters:
    -----------
    vocab : Vocabulary or int
        Vocabulary (or its size) the rows align with
    dim : int
        Embedding size
    seed : int
        RNG seed
    scale : float
        Half-width of the uniform range

    Returns:
    --------
    EmbeddingTable
    """
    if isinstance(vocab, int):
        vocab = Vocabulary([f"w{i}" for i in range(max(vocab - 2, 0))])
    rng = np.random.default_rng(seed)
    vectors = rng.uniform(-scale, scale, size=(vocab.size, dim)).astype(dtype)
    vectors[PAD] = 0.0
    return EmbeddingTable(mode=RANDOM_UNIFORM, vocab=vocab, word_vectors=vectors)


class NegativeSampler:
    """Draws word ids in proportion to count ** power."""

    def __init__(self, counts, power=0.75):
        counts = np.asarray(counts, dtype=np.float64)
        weights = counts ** power
        self.probabilities = weights / weights.sum()
        self.cum_table = np.cumsum(self.probabilities)
        self.cum_table[-1] = 1.0

    def draw(self, rng, n):
        return np.searchsorted(self.cum_table, rng.random(n), side="right")


def discard_probability(counts, t):
    """max(0, 1 - sqrt(t / f)) with f the relative frequency of each word."""
    counts = np.asarray(counts, dtype=np.float64)
    freq = counts / counts.sum()
    with np.errstate(divide="ignore"):
        return np.maximum(0.0, 1.0 - np.sqrt(t / freq))


def skipgram_pair_loss(center_rows, context_row, negative_rows):
    """
    Negative-sampling loss for one center against one context and its negatives.

    The center representation is the mean of center_rows (word row plus subword rows).

    Returns:
    --------
    tuple
        (loss, d_center_rows, d_context_row, d_negative_rows)
    """
    n = center_rows.shape[0]
    h = center_rows.mean(axis=0)
    pos = context_row @ h
    neg = negative_rows @ h
    loss = np.logaddexp(0.0, -pos) + np.logaddexp(0.0, neg).sum()
    g_pos = sigmoid(pos) - 1.0
    g_neg = sigmoid(neg)
    dh = g_pos * context_row + g_neg @ negative_rows
    d_center = np.repeat((dh / n)[None, :], n, axis=0)
    return loss, d_center, g_pos * h, np.outer(g_neg, h)


def _check_alignment(vocab, counts):
    missing = [tok for tok in vocab.words if counts.get(tok, 0) == 0]
    if missing:
        raise AlignmentError(f"vocabulary was not built on this corpus ({len(missing)} tokens never occur, "
                             f"e.g. '{missing[0]}')")


def train_skipgram(corpus, cfg=SkipgramConfig(), seed=0, vocab=None, dtype=np.float32):
    """
    Train word and subword vectors with skip-gram and negative sampling.

    Parameters:
    -----------
    corpus : list of list of str
        Tokenized training texts (labeled train/validation plus unlabeled pool)
    cfg : SkipgramConfig
        Window, negatives, subsampling, epochs, learning rate and n-gram settings
    seed : int
        Seed for initialization, windows, subsampling and negatives
    vocab : Vocabulary, optional
        Vocabulary built on the same corpus; built here with cfg.min_count otherwise

    Returns:
    --------
    EmbeddingTable
        Mode skipgram_subword; history holds the mean pair loss of every epoch
    """
    corpus = [list(doc) for doc in corpus]
    if not any(corpus):
        raise EmptyCorpus("skip-gram corpus is empty")

    counts = Counter()
    for doc in corpus:
        counts.update(doc)
    if vocab is None:
        vocab = build_vocabulary(None, min_count=cfg.min_count, counts=counts)
    else:
        _check_alignment(vocab, counts)
    if vocab.size <= 2:
        raise EmptyCorpus(f"no token reaches min_count={cfg.min_count}")

    hasher = SubwordHasher(cfg.n_min, cfg.n_max, cfg.bucket_count)
    rng = np.random.default_rng(seed)
    d = cfg.dim
    V = vocab.size
    W_in = rng.uniform(-0.5 / d, 0.5 / d, size=(V, d)).astype(dtype)
    S_in = rng.uniform(-0.5 / d, 0.5 / d, size=(cfg.bucket_count, d)).astype(dtype)
    W_out = np.zeros((V, d), dtype=dtype)
    W_in[PAD] = 0.0
    W_in[UNK] = 0.0

    word_counts = np.zeros(V, dtype=np.float64)
    for idx, tok in enumerate(vocab.id_to_token):
        if idx > UNK:
            word_counts[idx] = counts[tok]
    # ids 0 and 1 are never drawn
    sampler = NegativeSampler(word_counts[2:])
    discard = np.zeros(V)
    discard[2:] = discard_probability(word_counts[2:], cfg.subsample_t)
    subwords = [np.zeros(0, dtype=np.int64)] * 2 + \
               [np.asarray(hasher.ids(tok), dtype=np.int64) for tok in vocab.words]

    encoded = []
    for doc in corpus:
        ids = np.array([vocab.get(t) for t in doc], dtype=np.int64)
        encoded.append(ids[ids > UNK])
    total_words = max(1, sum(len(ids) for ids in encoded)) * cfg.epochs
    words_done = 0
    min_lr = cfg.initial_lr * cfg.min_lr_fraction

    logger.info("Skip-gram: %d documents, vocabulary %d, dim %d, %d epochs",
                len(encoded), V - 2, d, cfg.epochs)
    history = []
    for epoch in range(cfg.epochs):
        epoch_loss = 0.0
        epoch_pairs = 0
        for ids in encoded:
            lr = max(min_lr, cfg.initial_lr * (1.0 - words_done / total_words))
            words_done += len(ids)
            if len(ids) == 0:
                continue
            kept = ids[rng.random(len(ids)) >= discard[ids]]
            for pos in range(len(kept)):
                b = int(rng.integers(1, cfg.window + 1))
                context = np.concatenate([kept[max(0, pos - b):pos], kept[pos + 1:pos + 1 + b]])
                if len(context) == 0:
                    continue
                k = len(context)
                negatives = sampler.draw(rng, k * cfg.negatives).reshape(k, cfg.negatives) + 2
                targets = np.concatenate([context[:, None], negatives], axis=1)
                labels = np.zeros(targets.shape, dtype=dtype)
                labels[:, 0] = 1.0
                active = np.ones(targets.shape, dtype=bool)
                active[:, 1:] = negatives != context[:, None]

                w = kept[pos]
                subs = subwords[w]
                n_parts = 1 + len(subs)
                h = (W_in[w] + S_in[subs].sum(axis=0)) / n_parts

                flat = targets.ravel()
                U = W_out[flat]
                scores = U @ h
                signed = np.where(labels.ravel() > 0, -scores, scores)
                epoch_loss += float(np.logaddexp(0.0, signed)[active.ravel()].sum())
                epoch_pairs += k

                g = (labels.ravel() - sigmoid(scores)) * lr * active.ravel()
                g = g.astype(dtype)
                grad_h = g @ U
                np.add.at(W_out, flat, np.outer(g, h).astype(dtype))
                W_in[w] += grad_h / n_parts
                if len(subs):
                    np.add.at(S_in, subs, grad_h / n_parts)
        mean_loss = epoch_loss / max(epoch_pairs, 1)
        history.append(mean_loss)
        logger.info("Skip-gram epoch %d/%d: mean pair loss %.4f (lr %.5f)",
                    epoch + 1, cfg.epochs, mean_loss, lr)

    return EmbeddingTable(mode=SKIPGRAM_SUBWORD, vocab=vocab, word_vectors=W_in,
                          subword_vectors=S_in, hasher=hasher, history=history)


def word_vector(word, table):
    """
    Vector for one word.

    random_uniform: the word's row, or the UNK row when unknown.
    skipgram_subword: mean of the word row and its subword rows; unknown words use the
    subword rows only.
    """
    idx = table.vocab.get(word)
    if table.mode == RANDOM_UNIFORM:
        return table.word_vectors[idx].copy()
    subs = table.subword_ids(word)
    parts = table.subword_vectors[subs]
    if idx > UNK:
        return (table.word_vectors[idx] + parts.sum(axis=0)) / (1 + len(subs))
    if len(subs) == 0:
        return np.zeros(table.dim, dtype=table.word_vectors.dtype)
    return parts.mean(axis=0)


def lookup_for_vocab(table, vocab):
    """
    Classifier look-up matrix aligned with vocab ids.

    A skip-gram table composes every row from its word and subword vectors, so any
    vocabulary can be served; a random-uniform table only serves its own vocabulary.
    """
    if table.mode == RANDOM_UNIFORM:
        if vocab_checksum(vocab) != table.checksum:
            raise AlignmentError("random-uniform table was built for a different vocabulary")
        return table.word_vectors.copy()
    out = np.zeros((vocab.size, table.dim), dtype=table.word_vectors.dtype)
    for idx, tok in enumerate(vocab.id_to_token):
        if idx > UNK:
            out[idx] = word_vector(tok, table)
    return out


def _corpus_blob(digests):
    return "".join(f"{d}\n" for d in sorted(digests)).encode("ascii")


def save_table(table, path):
    """
    Write the table in the checkpoint container.

    The vocabulary goes to path + '.vocab'. When the table records its training texts,
    their digests go to path + '.corpus', and the sidecar pins that file's hash.
    """
    params = ParamSet([("word_vectors", table.word_vectors)])
    if table.subword_vectors is not None:
        params["subword_vectors"] = table.subword_vectors
    metadata = {
        "kind": "embedding_table",
        "mode": table.mode,
        "dim": table.dim,
        "vocab_checksum": table.checksum,
        "history": [float(x) for x in table.history],
    }
    if table.hasher is not None:
        metadata.update(n_min=table.hasher.n_min, n_max=table.hasher.n_max,
                        bucket_count=table.hasher.bucket_count)
    if table.corpus_digests is not None:
        blob = _corpus_blob(table.corpus_digests)
        with open(path + ".corpus", "wb") as f:
            f.write(blob)
        metadata.update(corpus_documents=len(table.corpus_digests),
                        corpus_checksum=hashlib.sha256(blob).hexdigest())
    table.vocab.save(path + ".vocab")
    save_checkpoint(params, path, metadata)
    return path


def _load_corpus_digests(path, meta):
    if "corpus_checksum" not in meta:
        return None
    try:
        with open(path + ".corpus", "rb") as f:
            blob = f.read()
    except FileNotFoundError:
        raise CorruptTable(f"{path}: corpus record missing")
    if hashlib.sha256(blob).hexdigest() != meta["corpus_checksum"]:
        raise CorruptTable(f"{path}: corpus record does not match checksum")
    return frozenset(blob.decode("ascii").split())


def load_table(path, vocab=None):
    """
    Load a table saved by save_table.

    Raises CorruptTable when the file or its sidecar is damaged, and AlignmentError when
    a vocabulary is passed whose checksum differs from the stored one.
    """
    try:
        params, meta = load_checkpoint(path)
    except CorruptCheckpoint as e:
        raise CorruptTable(e.message)
    if meta.get("kind") != "embedding_table":
        raise CorruptTable(f"{path}: not an embedding table")
    stored_vocab = Vocabulary.load(path + ".vocab") if os.path.exists(path + ".vocab") else None
    if stored_vocab is None or vocab_checksum(stored_vocab) != meta.get("vocab_checksum"):
        raise CorruptTable(f"{path}: vocabulary file missing or does not match checksum")
    if vocab is not None and vocab_checksum(vocab) != meta["vocab_checksum"]:
        raise AlignmentError(f"{path}: table vocabulary differs from the one supplied")
    hasher = None
    if meta["mode"] == SKIPGRAM_SUBWORD:
        hasher = SubwordHasher(meta["n_min"], meta["n_max"], meta["bucket_count"])
    return EmbeddingTable(
        mode=meta["mode"], vocab=stored_vocab, word_vectors=params["word_vectors"],
        subword_vectors=params["subword_vectors"] if "subword_vectors" in params else None,
        hasher=hasher, history=list(meta.get("history", [])),
        corpus_digests=_load_corpus_digests(path, meta),
    )


def export_text(table, path):
    """Write "count dim" then one "token v1 ... vd" line per vocabulary word."""
    words = table.vocab.words
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{len(words)} {table.dim}\n")
        for tok in words:
            vec = word_vector(tok, table)
            f.write(tok + " " + " ".join(repr(float(x)) for x in vec) + "\n")
    return path


def nearest_neighbors(word, k, table):
    """
    The k vocabulary words with highest cosine to word, query excluded.

    Ties are broken by ascending token id; k is clipped to the number of candidates.
    """
    if k <= 0:
        return []
    query = word_vector(word, table).astype(np.float64)
    matrix = table.composed_matrix().astype(np.float64)
    ids = np.arange(2, table.vocab.size)
    qid = table.vocab.get(word)
    ids = ids[ids != qid]
    cand = matrix[ids]
    norms = np.linalg.norm(cand, axis=1) * np.linalg.norm(query)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.where(norms > 0, cand @ query / norms, 0.0)
    order = np.lexsort((ids, -cos))[:min(k, len(ids))]
    return [(table.vocab.token(int(ids[i])), float(cos[i])) for i in order]
