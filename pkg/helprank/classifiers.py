"""
Helpfulness classifiers: RCNN, Kim-style CNN, bag-of-n-grams linear model and a
linear SVM over TF-IDF features.

Neural models share one batched interface: forward_batch(params, batch) returns
(logits, trace) and backward_batch(params, batch, trace, dlogits) returns a ParamSet
of gradients. Gradients are derived by hand and verified with numerics.grad_check.
"""

import logging
import os
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from embeddings import vocab_checksum
from errors import AlignmentError, CorruptCheckpoint, DegenerateLabels, EmptySequence, TraceError
from numerics import ParamSet, load_checkpoint, save_checkpoint, softmax
from review_corpus import HelpfulnessLabel
from text_pipeline import PAD, UNK, EncodedSequence, IdfTable, Tokenizer, Vocabulary, encode, tfidf_vector

logger = logging.getLogger(__name__)

N_CLASSES = 2
NGRAM_HASH_MULTIPLIER = 116049371


def glorot(rng, shape, dtype=np.float32):
    """Uniform in +-sqrt(6 / (fan_in + fan_out)); shape is (fan_out, fan_in)."""
    limit = np.sqrt(6.0 / (shape[0] + shape[-1]))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


@dataclass
class Batch:
    """Padded id matrix plus everything a model needs for one step."""
    ids: np.ndarray
    lengths: np.ndarray
    labels: Optional[np.ndarray] = None
    indices: Optional[np.ndarray] = None
    # OOV positions whose embedding is supplied from outside the trainable table
    oov_rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    oov_cols: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    oov_vectors: Optional[np.ndarray] = None
    features: Optional[list] = None

    @property
    def size(self):
        return int(self.ids.shape[0])

    @property
    def mask(self):
        return np.arange(self.ids.shape[1])[None, :] < self.lengths[:, None]


def batch_from_sequences(sequences, labels=None, oov_lookup=None, indices=None, featurizer=None):
    """
    Pad encoded sequences into a Batch.

    oov_lookup maps an out-of-vocabulary token to a fixed vector (skip-gram tables
    compose one from subwords); without it OOV positions read the UNK row.
    """
    lengths = np.array([s.length for s in sequences], dtype=np.int64)
    if np.any(lengths == 0):
        raise EmptySequence("cannot batch an empty sequence")
    width = int(lengths.max())
    ids = np.full((len(sequences), width), PAD, dtype=np.int64)
    for i, s in enumerate(sequences):
        ids[i, :s.length] = s.ids
    batch = Batch(ids=ids, lengths=lengths,
                  labels=None if labels is None else np.asarray(labels, dtype=np.int64),
                  indices=None if indices is None else np.asarray(indices, dtype=np.int64))
    if oov_lookup is not None:
        rows, cols, vectors = [], [], []
        for i, s in enumerate(sequences):
            for pos, tok in s.oov:
                rows.append(i)
                cols.append(pos)
                vectors.append(oov_lookup(tok))
        if rows:
            batch.oov_rows = np.array(rows, dtype=np.int64)
            batch.oov_cols = np.array(cols, dtype=np.int64)
            batch.oov_vectors = np.stack(vectors)
    if featurizer is not None:
        batch.features = [featurizer.features(s.ids[:s.length]) for s in sequences]
    return batch


def _embed(E, batch, ids=None):
    ids = batch.ids if ids is None else ids
    X = E[ids]
    if batch.oov_vectors is not None and len(batch.oov_rows):
        X[batch.oov_rows, batch.oov_cols] = batch.oov_vectors.astype(E.dtype)
    return X


def _embedding_grad(E, ids, dX, batch):
    """Scatter position gradients into table rows, skipping PAD and overridden positions."""
    dE = np.zeros_like(E)
    keep = ids != PAD
    if batch.oov_vectors is not None and len(batch.oov_rows):
        keep = keep.copy()
        keep[batch.oov_rows, batch.oov_cols] = False
    np.add.at(dE, ids[keep], dX[keep])
    return dE


# ---------------------------------------------------------------------------
# RCNN
# ---------------------------------------------------------------------------

def init_rcnn_params(embedding_matrix, rnn_hidden, fc_hidden, seed=0, init_scale=0.05,
                     dtype=np.float32):
    """
    RCNN parameters around an existing look-up matrix.

    Parameters:
    -----------
    embedding_matrix : np.ndarray
        (|V|, d) initial look-up table
    rnn_hidden : int
        Context size c of the left and right recurrences
    fc_hidden : int
        Width h of the latent layer before max pooling
    seed : int
        RNG seed
    init_scale : float
        Half-width of the uniform range for the boundary context vectors

    Returns:
    --------
    ParamSet
    """
    rng = np.random.default_rng(seed)
    d = embedding_matrix.shape[1]
    c, h = rnn_hidden, fc_hidden
    return ParamSet([
        ("E", np.array(embedding_matrix, dtype=dtype)),
        ("W_l", glorot(rng, (c, c), dtype)),
        ("W_sl", glorot(rng, (c, d), dtype)),
        ("W_r", glorot(rng, (c, c), dtype)),
        ("W_sr", glorot(rng, (c, d), dtype)),
        ("c_left", rng.uniform(-init_scale, init_scale, size=c).astype(dtype)),
        ("c_right", rng.uniform(-init_scale, init_scale, size=c).astype(dtype)),
        ("W2", glorot(rng, (h, 2 * c + d), dtype)),
        ("b2", np.zeros(h, dtype=dtype)),
        ("W4", glorot(rng, (N_CLASSES, h), dtype)),
        ("b4", np.zeros(N_CLASSES, dtype=dtype)),
    ])


@dataclass
class RCNNTrace:
    ids: np.ndarray
    lengths: np.ndarray
    X: np.ndarray
    c_left: np.ndarray
    c_right: np.ndarray
    xcat: np.ndarray
    y: np.ndarray
    argmax: np.ndarray
    pooled: np.ndarray

    @property
    def n_positions(self):
        return int(self.lengths.sum())


def rcnn_forward_batch(params, batch, training=False, rng=None):
    """Left/right recurrent contexts, tanh latent layer, max pooling over valid positions."""
    if np.any(batch.lengths < 1):
        raise EmptySequence("RCNN needs at least one token per sequence")
    E = params["E"]
    W_l, W_sl, W_r, W_sr = params["W_l"], params["W_sl"], params["W_r"], params["W_sr"]
    B, T = batch.ids.shape
    c = W_l.shape[0]
    X = _embed(E, batch)

    cl = np.zeros((B, T, c), dtype=E.dtype)
    cl[:, 0] = params["c_left"]
    for t in range(1, T):
        cl[:, t] = np.tanh(cl[:, t - 1] @ W_l.T + X[:, t - 1] @ W_sl.T)

    last = batch.lengths - 1
    cr = np.zeros((B, T, c), dtype=E.dtype)
    cr[:, T - 1] = params["c_right"]
    for t in range(T - 2, -1, -1):
        step = np.tanh(cr[:, t + 1] @ W_r.T + X[:, t + 1] @ W_sr.T)
        cr[:, t] = np.where((t >= last)[:, None], params["c_right"], step)

    xcat = np.concatenate([cl, X, cr], axis=2)
    y = np.tanh(xcat @ params["W2"].T + params["b2"])
    masked = np.where(batch.mask[:, :, None], y, -np.inf)
    argmax = masked.argmax(axis=1)
    pooled = np.take_along_axis(y, argmax[:, None, :], axis=1)[:, 0]
    logits = pooled @ params["W4"].T + params["b4"]
    trace = RCNNTrace(ids=batch.ids.copy(), lengths=batch.lengths.copy(), X=X, c_left=cl,
                      c_right=cr, xcat=xcat, y=y, argmax=argmax, pooled=pooled)
    return logits, trace


def _check_trace(trace, batch):
    if trace.ids.shape != batch.ids.shape or not np.array_equal(trace.ids, batch.ids) \
            or not np.array_equal(trace.lengths, batch.lengths):
        raise TraceError("trace does not belong to this batch")


def rcnn_backward_batch(params, batch, trace, dlogits):
    """Full backpropagation through time for both recurrences; pooling routes to argmax only."""
    _check_trace(trace, batch)
    E = params["E"]
    W_l, W_sl, W_r, W_sr = params["W_l"], params["W_sl"], params["W_r"], params["W_sr"]
    B, T = batch.ids.shape
    c = W_l.shape[0]
    d = E.shape[1]
    dlogits = np.asarray(dlogits, dtype=E.dtype).reshape(B, N_CLASSES)

    grads = ParamSet()
    dpooled = dlogits @ params["W4"]
    dW4 = dlogits.T @ trace.pooled
    db4 = dlogits.sum(axis=0)

    dy = np.zeros_like(trace.y)
    np.put_along_axis(dy, trace.argmax[:, None, :], dpooled[:, None, :], axis=1)
    dz = dy * (1.0 - trace.y ** 2)
    H = dz.shape[2]
    dW2 = dz.reshape(-1, H).T @ trace.xcat.reshape(B * T, -1)
    db2 = dz.sum(axis=(0, 1))
    dxcat = dz @ params["W2"]
    dcl = dxcat[:, :, :c].copy()
    dX = dxcat[:, :, c:c + d].copy()
    dcr = dxcat[:, :, c + d:].copy()

    dW_l = np.zeros_like(W_l)
    dW_sl = np.zeros_like(W_sl)
    cl = trace.c_left
    for t in range(T - 1, 0, -1):
        da = dcl[:, t] * (1.0 - cl[:, t] ** 2)
        dW_l += da.T @ cl[:, t - 1]
        dW_sl += da.T @ trace.X[:, t - 1]
        dcl[:, t - 1] += da @ W_l
        dX[:, t - 1] += da @ W_sl
    dc_left = dcl[:, 0].sum(axis=0)

    dW_r = np.zeros_like(W_r)
    dW_sr = np.zeros_like(W_sr)
    cr = trace.c_right
    boundary = np.arange(T)[None, :] >= (batch.lengths - 1)[:, None]
    for t in range(0, T - 1):
        da = dcr[:, t] * (1.0 - cr[:, t] ** 2) * (~boundary[:, t])[:, None]
        dW_r += da.T @ cr[:, t + 1]
        dW_sr += da.T @ trace.X[:, t + 1]
        dcr[:, t + 1] += da @ W_r
        dX[:, t + 1] += da @ W_sr
    dc_right = (dcr * boundary[:, :, None]).sum(axis=(0, 1))

    grads["E"] = _embedding_grad(E, batch.ids, dX, batch)
    grads["W_l"] = dW_l
    grads["W_sl"] = dW_sl
    grads["W_r"] = dW_r
    grads["W_sr"] = dW_sr
    grads["c_left"] = dc_left
    grads["c_right"] = dc_right
    grads["W2"] = dW2
    grads["b2"] = db2
    grads["W4"] = dW4
    grads["b4"] = db4
    return grads


def rcnn_forward(params, seq, oov_lookup=None):
    """Logits (length 2) and trace for one encoded sequence."""
    if seq.length == 0:
        raise EmptySequence("RCNN needs at least one token")
    batch = batch_from_sequences([seq], oov_lookup=oov_lookup)
    logits, trace = rcnn_forward_batch(params, batch)
    return logits[0], trace


def rcnn_backward(params, seq, trace, dlogits, oov_lookup=None):
    batch = batch_from_sequences([seq], oov_lookup=oov_lookup)
    return rcnn_backward_batch(params, batch, trace, np.asarray(dlogits)[None, :])


# ---------------------------------------------------------------------------
# Kim-style CNN
# ---------------------------------------------------------------------------

def init_cnn_params(embedding_matrix, widths=(3, 4, 5), maps=100, seed=0, dtype=np.float32):
    if len(set(widths)) != len(widths):
        raise ValueError(f"filter widths must be distinct (got {widths})")
    rng = np.random.default_rng(seed)
    d = embedding_matrix.shape[1]
    params = ParamSet([("E", np.array(embedding_matrix, dtype=dtype))])
    for k in widths:
        params[f"F{k}"] = glorot(rng, (maps, k * d), dtype)
        params[f"bF{k}"] = np.zeros(maps, dtype=dtype)
    params["W_out"] = glorot(rng, (N_CLASSES, maps * len(widths)), dtype)
    params["b_out"] = np.zeros(N_CLASSES, dtype=dtype)
    return params


def cnn_widths(params):
    return sorted(int(name[1:]) for name in params.names() if name.startswith("F"))


@dataclass
class CNNTrace:
    ids: np.ndarray
    lengths: np.ndarray
    windows: Dict[int, np.ndarray]
    z: Dict[int, np.ndarray]
    argmax: Dict[int, np.ndarray]
    features: np.ndarray
    dropout_mask: Optional[np.ndarray] = None


def cnn_forward_batch(params, batch, training=False, rng=None, dropout=0.0):
    """
    ReLU convolutions of each width with max-over-time pooling.

    Sequences shorter than the widest filter are padded with PAD up to that width.
    """
    if np.any(batch.lengths < 1):
        raise EmptySequence("CNN needs at least one token per sequence")
    widths = cnn_widths(params)
    max_w = max(widths)
    E = params["E"]
    B, T = batch.ids.shape
    width = max(T, max_w)
    ids = np.full((B, width), PAD, dtype=np.int64)
    ids[:, :T] = batch.ids
    X = _embed(E, batch, ids)
    d = E.shape[1]
    effective = np.maximum(batch.lengths, max_w)

    windows, zs, argmaxes, pooled = {}, {}, {}, []
    for k in widths:
        P = width - k + 1
        win = sliding_window_view(X, k, axis=1).transpose(0, 1, 3, 2).reshape(B, P, k * d)
        z = win @ params[f"F{k}"].T + params[f"bF{k}"]
        a = np.maximum(z, 0.0)
        valid = np.arange(P)[None, :] <= (effective - k)[:, None]
        am = np.where(valid[:, :, None], a, -np.inf).argmax(axis=1)
        pooled.append(np.take_along_axis(a, am[:, None, :], axis=1)[:, 0])
        windows[k], zs[k], argmaxes[k] = win, z, am
    features = np.concatenate(pooled, axis=1)

    mask = None
    if training and dropout > 0.0:
        rng = rng or np.random.default_rng(0)
        mask = ((rng.random(features.shape) >= dropout) / (1.0 - dropout)).astype(E.dtype)
        features = features * mask
    logits = features @ params["W_out"].T + params["b_out"]
    trace = CNNTrace(ids=ids, lengths=batch.lengths.copy(), windows=windows, z=zs,
                     argmax=argmaxes, features=features, dropout_mask=mask)
    return logits, trace


def cnn_backward_batch(params, batch, trace, dlogits):
    if trace.ids.shape[0] != batch.ids.shape[0] or \
            not np.array_equal(trace.ids[:, :batch.ids.shape[1]], batch.ids):
        raise TraceError("trace does not belong to this batch")
    E = params["E"]
    B = batch.ids.shape[0]
    d = E.shape[1]
    dlogits = np.asarray(dlogits, dtype=E.dtype).reshape(B, N_CLASSES)
    grads = ParamSet()

    dfeat = dlogits @ params["W_out"]
    dW_out = dlogits.T @ trace.features
    db_out = dlogits.sum(axis=0)
    if trace.dropout_mask is not None:
        dfeat = dfeat * trace.dropout_mask

    dX = np.zeros((B, trace.ids.shape[1], d), dtype=E.dtype)
    offset = 0
    for k in cnn_widths(params):
        F = params[f"F{k}"]
        maps = F.shape[0]
        z = trace.z[k]
        P = z.shape[1]
        da = np.zeros_like(z)
        np.put_along_axis(da, trace.argmax[k][:, None, :], dfeat[:, None, offset:offset + maps], axis=1)
        dz = da * (z > 0)
        grads[f"F{k}"] = dz.reshape(-1, maps).T @ trace.windows[k].reshape(B * P, -1)
        grads[f"bF{k}"] = dz.sum(axis=(0, 1))
        dwin = (dz @ F).reshape(B, P, k, d)
        for j in range(k):
            dX[:, j:j + P] += dwin[:, :, j, :]
        offset += maps

    grads["E"] = _embedding_grad(E, trace.ids, dX, batch)
    grads["W_out"] = dW_out
    grads["b_out"] = db_out
    # keep the conventional order: E first
    ordered = ParamSet()
    for name in params.names():
        ordered[name] = grads[name]
    return ordered


def cnn_forward(params, seq, oov_lookup=None):
    if seq.length == 0:
        raise EmptySequence("CNN needs at least one token")
    batch = batch_from_sequences([seq], oov_lookup=oov_lookup)
    logits, trace = cnn_forward_batch(params, batch)
    return logits[0], trace


# ---------------------------------------------------------------------------
# Linear bag-of-n-grams model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NgramFeaturizer:
    """
    Word ids plus hashed word n-grams as rows of one table.

    Rows [0, vocab_size) are words; n-gram rows start at vocab_size.
    """
    vocab_size: int
    word_ngrams: int = 2
    buckets: int = 2 ** 16

    @property
    def table_size(self):
        return self.vocab_size + (self.buckets if self.word_ngrams > 1 else 0)

    def features(self, ids):
        ids = [int(i) for i in ids] or [UNK]
        rows = list(ids)
        for n in range(2, self.word_ngrams + 1):
            for i in range(len(ids) - n + 1):
                h = ids[i]
                for j in range(i + 1, i + n):
                    h = (h * NGRAM_HASH_MULTIPLIER + ids[j]) & 0xFFFFFFFFFFFFFFFF
                rows.append(self.vocab_size + h % self.buckets)
        return np.asarray(rows, dtype=np.int64)


def init_linear_params(featurizer, dim=100, seed=0, dtype=np.float32):
    rng = np.random.default_rng(seed)
    return ParamSet([
        ("E", rng.uniform(-1.0 / dim, 1.0 / dim, size=(featurizer.table_size, dim)).astype(dtype)),
        ("W", glorot(rng, (N_CLASSES, dim), dtype)),
        ("b", np.zeros(N_CLASSES, dtype=dtype)),
    ])


@dataclass
class LinearTrace:
    features: list
    doc_vectors: np.ndarray


def linear_forward_batch(params, batch, training=False, rng=None):
    E = params["E"]
    docs = np.stack([E[f].mean(axis=0) for f in batch.features])
    logits = docs @ params["W"].T + params["b"]
    return logits, LinearTrace(features=batch.features, doc_vectors=docs)


def linear_backward_batch(params, batch, trace, dlogits):
    if len(trace.features) != len(batch.features):
        raise TraceError("trace does not belong to this batch")
    E = params["E"]
    dlogits = np.asarray(dlogits, dtype=E.dtype).reshape(len(trace.features), N_CLASSES)
    ddoc = dlogits @ params["W"]
    dE = np.zeros_like(E)
    for f, g in zip(trace.features, ddoc):
        np.add.at(dE, f, g / len(f))
    return ParamSet([("E", dE), ("W", dlogits.T @ trace.doc_vectors), ("b", dlogits.sum(axis=0))])


def linear_ngram_forward(params, tokens, vocab, featurizer):
    """Logits for one token list: mean of word and hashed n-gram rows, then an affine map."""
    seq = encode(tokens, vocab, max_len=len(tokens) or 1)
    feats = featurizer.features(seq.ids)
    doc = params["E"][feats].mean(axis=0)
    return params["W"] @ doc + params["b"]


# ---------------------------------------------------------------------------
# Linear SVM (Pegasos)
# ---------------------------------------------------------------------------

@dataclass
class SVMParams:
    w: np.ndarray
    b: float
    lam: float

    def to_paramset(self):
        return ParamSet([("w", self.w), ("b", np.array([self.b], dtype=self.w.dtype))])

    @classmethod
    def from_paramset(cls, params, lam):
        return cls(w=params["w"], b=float(params["b"][0]), lam=lam)


def label_signs(labels):
    """Class index 0 (helpful) is +1, class index 1 is -1."""
    return np.where(np.asarray(labels) == 0, 1.0, -1.0)


def svm_scores(model, X):
    return np.asarray(X @ model.w).ravel() + model.b


def svm_objective(model, X, labels):
    """lam/2 * (|w|^2 + b^2) + mean hinge."""
    y = label_signs(labels)
    hinge = np.maximum(0.0, 1.0 - y * svm_scores(model, X)).mean()
    return 0.5 * model.lam * (float(model.w @ model.w) + model.b ** 2) + hinge


def svm_train(X, labels, lam=1e-4, epochs=5, seed=0):
    """
    Pegasos SGD on the regularized hinge objective with step 1/(lam * t).

    Parameters:
    -----------
    X : scipy.sparse.csr_matrix
        TF-IDF rows (idf fit on the training split)
    labels : array of int
        Class indices (0 helpful, 1 unhelpful)
    lam : float
        Regularization strength
    epochs : int
        Passes over the data, each in a seed-determined order

    Returns:
    --------
    SVMParams
    """
    labels = np.asarray(labels, dtype=np.int64)
    if len(np.unique(labels)) < 2:
        raise DegenerateLabels("SVM training needs both classes")
    y = label_signs(labels)
    n, n_features = X.shape
    X = X.tocsr()
    rng = np.random.default_rng(seed)
    w = np.zeros(n_features, dtype=np.float64)
    b = 0.0
    t = 0
    for epoch in range(epochs):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (lam * t)
            start, end = X.indptr[i], X.indptr[i + 1]
            cols, vals = X.indices[start:end], X.data[start:end]
            margin = y[i] * (float(vals @ w[cols]) + b)
            shrink = 1.0 - eta * lam
            w *= shrink
            b *= shrink
            if margin < 1.0:
                w[cols] += eta * y[i] * vals
                b += eta * y[i]
        model = SVMParams(w=w, b=b, lam=lam)
        logger.debug("SVM epoch %d/%d: objective %.5f", epoch + 1, epochs, svm_objective(model, X, labels))
    return SVMParams(w=w, b=b, lam=lam)


# ---------------------------------------------------------------------------
# Registry, trained-model bundle, prediction and checkpoints
# ---------------------------------------------------------------------------

NEURAL_MODELS = {
    "rcnn": (rcnn_forward_batch, rcnn_backward_batch),
    "cnn": (cnn_forward_batch, cnn_backward_batch),
    "linear": (linear_forward_batch, linear_backward_batch),
}


def init_params(kind, cfg, vocab, embedding_matrix=None, seed=0):
    """Fresh parameters of a neural model kind under a TrainConfig."""
    dtype = np.dtype(cfg.dtype)
    if kind == "rcnn":
        return init_rcnn_params(embedding_matrix, cfg.rnn_hidden, cfg.fc_hidden, seed=seed,
                                init_scale=cfg.init_scale, dtype=dtype)
    if kind == "cnn":
        return init_cnn_params(embedding_matrix, widths=tuple(cfg.cnn_widths), maps=cfg.cnn_maps,
                               seed=seed, dtype=dtype)
    if kind == "linear":
        featurizer = NgramFeaturizer(vocab.size, cfg.word_ngrams, cfg.bigram_buckets)
        return init_linear_params(featurizer, dim=cfg.linear_dim, seed=seed, dtype=dtype)
    raise ValueError(f"'{kind}' is not a neural model kind")


@dataclass
class TrainedModel:
    """Everything predict needs: parameters plus the artifacts they were trained against."""
    kind: str
    params: ParamSet
    vocab: Vocabulary
    max_len: int = 500
    config: dict = field(default_factory=dict)
    oov_lookup: Optional[object] = None
    featurizer: Optional[NgramFeaturizer] = None
    idf: Optional[IdfTable] = None
    svm_lambda: float = 1e-4
    tokenizer: Tokenizer = field(default_factory=Tokenizer)

    def encode_text(self, text):
        tokens = self.tokenizer.tokenize(text)
        seq = encode(tokens, self.vocab, self.max_len)
        if seq.length == 0:
            seq = EncodedSequence(ids=(UNK,), length=1)
        return tokens, seq

    def logits_for(self, sequences):
        forward, _ = NEURAL_MODELS[self.kind]
        batch = batch_from_sequences(sequences, oov_lookup=self.oov_lookup, featurizer=self.featurizer)
        logits, _ = forward(self.params, batch)
        return logits


def predict(model, text):
    """
    Classify one review text.

    Returns:
    --------
    tuple
        (HelpfulnessLabel, confidence): softmax probability of the chosen class, or the
        absolute SVM margin. Equal logits choose class 0 (helpful).
    """
    tokens, seq = model.encode_text(text)
    if model.kind == "svm":
        svm = SVMParams.from_paramset(model.params, model.svm_lambda)
        score = float(svm_scores(svm, tfidf_vector(tokens, model.vocab, model.idf))[0])
        label = HelpfulnessLabel.HELPFUL if score >= 0 else HelpfulnessLabel.UNHELPFUL
        return label, abs(score)
    logits = model.logits_for([seq])[0]
    cls = int(np.argmax(logits))
    probs = softmax(logits.astype(np.float64))
    return HelpfulnessLabel.from_index(cls), float(probs[cls])


def is_low_confidence(model, text):
    """True when the text has no in-vocabulary token."""
    tokens = model.tokenizer.tokenize(text)
    return not any(t in model.vocab for t in tokens[:model.max_len])


def save_model(model, path):
    """Checkpoint the parameters with a model-kind tag; vocab (and idf) files sit beside it."""
    metadata = {
        "kind": "classifier",
        "model": model.kind,
        "max_len": model.max_len,
        "vocab_checksum": vocab_checksum(model.vocab),
        "config": model.config,
        "svm_lambda": model.svm_lambda,
    }
    if model.featurizer is not None:
        metadata.update(word_ngrams=model.featurizer.word_ngrams, buckets=model.featurizer.buckets)
    model.vocab.save(path + ".vocab")
    if model.idf is not None:
        model.idf.save(path + ".idf")
    save_checkpoint(model.params, path, metadata)
    return path


def load_model(path, vocab=None, oov_lookup=None):
    """
    Load a classifier checkpoint.

    A vocabulary passed explicitly must match the one the model was trained with.
    """
    params, meta = load_checkpoint(path)
    if meta.get("kind") != "classifier":
        raise CorruptCheckpoint(f"{path}: not a classifier checkpoint")
    if vocab is None:
        if not os.path.exists(path + ".vocab"):
            raise AlignmentError(f"{path}: no vocabulary supplied or stored")
        vocab = Vocabulary.load(path + ".vocab")
    if vocab_checksum(vocab) != meta["vocab_checksum"]:
        raise AlignmentError(f"{path}: model was trained with a different vocabulary")
    kind = meta["model"]
    featurizer = None
    if kind == "linear":
        featurizer = NgramFeaturizer(vocab.size, meta["word_ngrams"], meta["buckets"])
    idf = IdfTable.load(path + ".idf") if kind == "svm" else None
    if kind in ("rcnn", "cnn") and params["E"].shape[0] != vocab.size:
        raise AlignmentError(f"{path}: embedding rows {params['E'].shape[0]} != vocabulary size {vocab.size}")
    return TrainedModel(kind=kind, params=params, vocab=vocab, max_len=meta["max_len"],
                        config=meta.get("config", {}), oov_lookup=oov_lookup,
                        featurizer=featurizer, idf=idf, svm_lambda=meta.get("svm_lambda", 1e-4))
