"""
Numerical core shared by every trainable model: affine maps, losses, Adam,
finite-difference gradient checking and the HRNK parameter checkpoint format.
"""

import hashlib
import json
import logging
import os
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict

import numpy as np
from scipy.special import expit, log_softmax as _log_softmax, softmax as _softmax

from errors import CorruptCheckpoint, NumericalError, ShapeError

logger = logging.getLogger(__name__)

MAGIC = b"HRNK"
FORMAT_VERSION = 1
DTYPE_CODES = {np.dtype("<f4"): 0, np.dtype("<f8"): 1}
CODE_DTYPES = {v: k for k, v in DTYPE_CODES.items()}


class ParamSet:
    """Named arrays with stable (insertion) order."""

    def __init__(self, items=None):
        self._arrays = OrderedDict()
        for name, value in (items.items() if isinstance(items, dict) else (items or [])):
            self[name] = value

    def __getitem__(self, name):
        return self._arrays[name]

    def __setitem__(self, name, value):
        self._arrays[name] = np.asarray(value)

    def __contains__(self, name):
        return name in self._arrays

    def __iter__(self):
        return iter(self._arrays)

    def __len__(self):
        return len(self._arrays)

    def names(self):
        return list(self._arrays)

    def items(self):
        return self._arrays.items()

    def shapes(self):
        return {name: tuple(a.shape) for name, a in self._arrays.items()}

    @property
    def count(self):
        """Total number of scalar parameters."""
        return int(sum(a.size for a in self._arrays.values()))

    @property
    def dtype(self):
        for a in self._arrays.values():
            return a.dtype
        return np.dtype(np.float32)

    def copy(self):
        return ParamSet((name, a.copy()) for name, a in self._arrays.items())

    def astype(self, dtype):
        return ParamSet((name, a.astype(dtype)) for name, a in self._arrays.items())

    def zeros_like(self):
        return ParamSet((name, np.zeros_like(a)) for name, a in self._arrays.items())

    def equals(self, other):
        if self.names() != other.names():
            return False
        return all(np.array_equal(self[n], other[n]) and self[n].dtype == other[n].dtype
                   for n in self.names())

    def check_finite(self, context=""):
        for name, a in self._arrays.items():
            if not np.all(np.isfinite(a)):
                raise NumericalError(f"non-finite values in '{name}' {context}".strip(), name=name)

    def __repr__(self):
        return f"ParamSet({', '.join(f'{n}{tuple(a.shape)}' for n, a in self._arrays.items())})"


def affine(x, W, b):
    """
    W @ x + b for a vector x, or X @ W.T + b for a row batch X.

    W is (out, in); b is (out,).
    """
    x = np.asarray(x)
    W = np.asarray(W)
    b = np.asarray(b)
    if W.ndim != 2 or b.shape != (W.shape[0],) or x.shape[-1:] != (W.shape[1],) or x.ndim > 2:
        raise ShapeError(f"affine: x{x.shape} W{W.shape} b{b.shape} do not conform")
    if x.ndim == 1:
        return W @ x + b
    return x @ W.T + b


def sigmoid(x):
    return expit(x)


def softmax(logits, axis=-1):
    return _softmax(logits, axis=axis)


def log_softmax(logits, axis=-1):
    return _log_softmax(logits, axis=axis)


def softmax_cross_entropy(logits, true_class):
    """
    Loss and gradient of -log softmax(logits)[true_class] for one logit vector.

    Returns:
    --------
    tuple
        (loss, dlogits) where dlogits = softmax(logits) - onehot(true_class)
    """
    logits = np.asarray(logits)
    n = logits.shape[-1]
    if not 0 <= int(true_class) < n:
        raise IndexError(f"class index {true_class} out of range for {n} classes")
    logp = log_softmax(logits)
    loss = -logp[true_class]
    grad = np.exp(logp)
    grad[true_class] -= 1.0
    return loss, grad


def batch_softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over a (batch, classes) logit matrix; gradient is scaled by 1/batch."""
    logits = np.asarray(logits)
    labels = np.asarray(labels, dtype=np.int64)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"labels{labels.shape} do not match logits{logits.shape}")
    if np.any(labels < 0) or np.any(labels >= k):
        raise IndexError(f"class index out of range for {k} classes")
    logp = log_softmax(logits, axis=1)
    rows = np.arange(n)
    loss = -logp[rows, labels].mean()
    grad = np.exp(logp)
    grad[rows, labels] -= 1.0
    return loss, grad / n


def hinge_loss(score, label, C=1.0):
    """C * max(0, 1 - label*score) and its subgradient in score."""
    margin = 1.0 - label * score
    if margin > 0:
        return C * margin, -C * label
    return 0.0, 0.0


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params, learning_rate=1e-3, **kwargs):
        state = cls(learning_rate=learning_rate, **kwargs)
        for name, a in params.items():
            state.m[name] = np.zeros_like(a)
            state.v[name] = np.zeros_like(a)
        return state


def adam_step(params, grads, state):
    """
    One Adam update with bias correction, in place.

    Parameters missing from grads (e.g. a frozen embedding table) are left untouched;
    the step counter advances once per call regardless.
    """
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name in params:
        if name not in grads:
            continue
        p = params[name]
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for '{name}' has shape {g.shape}, parameter {p.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / c1
        v_hat = v / c2
        p -= (state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.dtype, copy=False)
    return params, state


def grad_check(loss_fn, params, grads, n_coords=20, h=1e-3, seed=0, five_point=False,
               floor=1e-8, names=None):
    """
    Compare analytic gradients against finite differences at random coordinates.

    Finite differences are always taken on a float64 copy of params; loss_fn must
    accept a ParamSet of either precision and return a scalar.

    Parameters:
    -----------
    loss_fn : callable
        ParamSet -> scalar loss, deterministic and side-effect free
    params : ParamSet
        Point at which gradients were computed
    grads : ParamSet or dict
        Analytic gradients, same names and shapes
    n_coords : int
        Number of random coordinates checked
    h : float
        Step size
    five_point : bool
        Use the 4th-order five-point stencil instead of the central difference
    floor : float
        Lower bound of the relative-error denominator
    names : list of str, optional
        Restrict the check to these parameters

    Returns:
    --------
    float
        max |a - n| / max(|a|, |n|, floor) over the checked coordinates
    """
    rng = np.random.default_rng(seed)
    shadow = params.astype(np.float64)
    names = [n for n in (names or shadow.names()) if n in grads and shadow[n].size > 0]
    sizes = np.array([shadow[n].size for n in names], dtype=np.float64)
    weights = sizes / sizes.sum()

    def evaluate(name, idx, delta):
        arr = shadow[name]
        old = arr.flat[idx]
        arr.flat[idx] = old + delta
        try:
            value = float(loss_fn(shadow))
        finally:
            arr.flat[idx] = old
        if not np.isfinite(value):
            raise NumericalError(f"non-finite loss while perturbing '{name}'[{idx}]", name=name)
        return value

    worst = 0.0
    for _ in range(n_coords):
        name = names[int(rng.choice(len(names), p=weights))]
        idx = int(rng.integers(0, shadow[name].size))
        if five_point:
            numeric = (-evaluate(name, idx, 2 * h) + 8 * evaluate(name, idx, h)
                       - 8 * evaluate(name, idx, -h) + evaluate(name, idx, -2 * h)) / (12 * h)
        else:
            numeric = (evaluate(name, idx, h) - evaluate(name, idx, -h)) / (2 * h)
        analytic = float(np.asarray(grads[name]).flat[idx])
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
        if rel > worst:
            logger.debug("grad_check %s[%d]: analytic=%.6g numeric=%.6g rel=%.3g",
                         name, idx, analytic, numeric, rel)
        worst = max(worst, rel)
    return worst


def _header(params):
    chunks = [MAGIC, np.array([FORMAT_VERSION, len(params)], dtype="<u4").tobytes()]
    for name, a in params.items():
        dt = np.dtype(a.dtype).newbyteorder("<")
        if dt not in DTYPE_CODES:
            raise ShapeError(f"unsupported dtype {a.dtype} for '{name}'")
        encoded = name.encode("utf-8")
        chunks.append(np.array([len(encoded)], dtype="<u2").tobytes())
        chunks.append(encoded)
        chunks.append(np.array([DTYPE_CODES[dt], a.ndim], dtype="<u1").tobytes())
        chunks.append(np.array(a.shape, dtype="<u8").tobytes())
    return b"".join(chunks)


def checkpoint_bytes(params):
    """Serialize params: header, shape table, then row-major little-endian payloads."""
    body = [_header(params)]
    for _, a in params.items():
        body.append(np.ascontiguousarray(a, dtype=np.dtype(a.dtype).newbyteorder("<")).tobytes())
    return b"".join(body)


def save_checkpoint(params, path, metadata=None):
    """
    Write params to path and a JSON sidecar to path + '.json'.

    Both files are written to a temporary name first and renamed into place.
    """
    blob = checkpoint_bytes(params)
    sidecar = {
        "format": MAGIC.decode("ascii"),
        "version": FORMAT_VERSION,
        "tensors": [{"name": n, "shape": list(a.shape), "dtype": str(a.dtype)}
                    for n, a in params.items()],
        "checksum": hashlib.sha256(blob).hexdigest(),
        "metadata": metadata or {},
    }
    _atomic_write(path, blob)
    _atomic_write(path + ".json", json.dumps(sidecar, indent=2, sort_keys=True).encode("utf-8"))
    logger.info("Saved %d tensors (%d parameters) to %s", len(params), params.count, path)
    return sidecar


def _atomic_write(path, data):
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)


class _Reader:
    def __init__(self, blob, path):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n):
        if self.pos + n > len(self.blob):
            raise CorruptCheckpoint(f"{self.path}: truncated at byte {self.pos}")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def ints(self, dtype, count):
        dt = np.dtype(dtype)
        return np.frombuffer(self.take(dt.itemsize * count), dtype=dt)


def params_from_bytes(blob, path="<bytes>"):
    reader = _Reader(blob, path)
    if reader.take(4) != MAGIC:
        raise CorruptCheckpoint(f"{path}: bad magic bytes")
    version, n_tensors = (int(v) for v in reader.ints("<u4", 2))
    if version != FORMAT_VERSION:
        raise CorruptCheckpoint(f"{path}: unsupported format version {version}")
    table = []
    for _ in range(n_tensors):
        name_len = int(reader.ints("<u2", 1)[0])
        name = reader.take(name_len).decode("utf-8")
        code, ndim = (int(v) for v in reader.ints("<u1", 2))
        if code not in CODE_DTYPES:
            raise CorruptCheckpoint(f"{path}: unknown dtype code {code} for '{name}'")
        shape = tuple(int(s) for s in reader.ints("<u8", ndim))
        table.append((name, CODE_DTYPES[code], shape))
    params = ParamSet()
    for name, dt, shape in table:
        count = int(np.prod(shape)) if shape else 1
        params[name] = reader.ints(dt, count).reshape(shape).astype(dt.newbyteorder("="))
    if reader.pos != len(blob):
        raise CorruptCheckpoint(f"{path}: {len(blob) - reader.pos} trailing bytes")
    return params


def load_checkpoint(path):
    """
    Read a checkpoint and verify it against its sidecar when one exists.

    Returns:
    --------
    tuple
        (ParamSet, metadata dict)
    """
    with open(path, "rb") as f:
        blob = f.read()
    metadata = {}
    sidecar_path = path + ".json"
    if os.path.exists(sidecar_path):
        with open(sidecar_path, "r", encoding="utf-8") as f:
            try:
                sidecar = json.load(f)
            except json.JSONDecodeError as e:
                raise CorruptCheckpoint(f"{sidecar_path}: {e}")
        if hashlib.sha256(blob).hexdigest() != sidecar.get("checksum"):
            raise CorruptCheckpoint(f"{path}: checksum does not match sidecar")
        metadata = sidecar.get("metadata", {})
    return params_from_bytes(blob, path), metadata
