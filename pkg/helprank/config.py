"""
Configuration for helprank: published defaults, config dataclasses and loading.
"""

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, fields
from typing import Tuple

from dotenv import load_dotenv

from errors import ConfigError

# Load HELPRANK_SEED (and friends) from a .env file if present
load_dotenv()

VERSION = "0.1.0"
SEED_ENV_VAR = "HELPRANK_SEED"

# Product categories of the labeled corpus
CATEGORIES = ["Books", "Electronics", "CDsAndVinyl", "MoviesAndTV"]

CATEGORY_NAMES = {
    "Books": "Books",
    "Electronics": "Electronics",
    "CDsAndVinyl": "CDs and Vinyl",
    "MoviesAndTV": "Movies and TV",
}

# Labeling rules
HELPFUL_MIN = 0.75      # strictly more than 75% helpful votes
UNHELPFUL_MAX = 0.35    # strictly less than 35% helpful votes
MIN_VOTES = 10
MAX_LEN = 500

# Extraction sizes per category at full corpus scale
LABELED_PER_CLASS = 50_000
UNLABELED_PER_CATEGORY = 400_000

# Voting distribution bins: [0], [1,5], (5,10], (10,50], (50,100], (100, inf)
VOTE_BINS = [
    ("0", 0, 0),
    ("1-5", 1, 5),
    ("5-10", 6, 10),
    ("10-50", 11, 50),
    ("50-100", 51, 100),
    (">100", 101, None),
]

# Parameter setup of the two RCNN pipelines
TASK_DEFAULTS = {
    "t1": {
        "embedding": "random_uniform",
        "embed_dim": 256,
        "rnn_hidden": 256,
        "fc_hidden": 256,
    },
    "t2": {
        "embedding": "skipgram_subword",
        "embed_dim": 300,
        "rnn_hidden": 300,
        "fc_hidden": 300,
    },
}

MODEL_KINDS = ["rcnn", "cnn", "linear", "svm"]

# Published full-scale accuracies (percent). Reference metadata only.
SUPERVISED_REFERENCE = {
    "Books": {"linear": 81.4, "svm": 75.5, "bilstm": 80.9, "cnn": 78.7, "rcnn": 82.0},
    "Electronics": {"linear": 80.1, "svm": 73.3, "bilstm": 80.0, "cnn": 77.2, "rcnn": 81.0},
    "CDsAndVinyl": {"linear": 84.8, "svm": 78.5, "bilstm": 86.0, "cnn": 81.6, "rcnn": 86.0},
    "MoviesAndTV": {"linear": 83.9, "svm": 76.4, "bilstm": 82.0, "cnn": 79.0, "rcnn": 84.0},
}
SUPERVISED_REFERENCE_OVERALL = {
    "linear": 82.55, "svm": 75.9, "bilstm": 82.22, "cnn": 79.12, "rcnn": 83.25,
}
SEMI_SUPERVISED_REFERENCE = {
    "Books": 87.0, "Electronics": 86.0, "CDsAndVinyl": 92.0, "MoviesAndTV": 90.0,
}
SEMI_SUPERVISED_REFERENCE_OVERALL = 88.75
REFERENCE_TRAINING_SIZES = {"t1": 90_000, "t2": 490_000}
REFERENCE_TEST_SIZE = 10_000


@dataclass(frozen=True)
class LabelConfig:
    """Thresholds used to turn vote pairs into helpfulness labels."""
    helpful_min: float = HELPFUL_MIN
    unhelpful_max: float = UNHELPFUL_MAX
    min_votes: int = MIN_VOTES
    max_len: int = MAX_LEN
    use_summary: bool = False


@dataclass(frozen=True)
class SplitSpec:
    """Stratified train/validation/test proportions."""
    train_frac: float = 0.90
    test_frac: float = 0.10
    val_frac_of_train: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if abs(self.train_frac + self.test_frac - 1.0) > 1e-9:
            raise ConfigError("train_frac", f"train_frac + test_frac must be 1 "
                                            f"(got {self.train_frac} + {self.test_frac})")
        if not 0.0 <= self.val_frac_of_train < 1.0:
            raise ConfigError("val_frac_of_train",
                              f"val_frac_of_train must be in [0, 1) (got {self.val_frac_of_train})")


@dataclass(frozen=True)
class SkipgramConfig:
    """Skip-gram with negative sampling over words and character n-grams."""
    dim: int = 300
    window: int = 5
    negatives: int = 5
    subsample_t: float = 1e-4
    epochs: int = 5
    initial_lr: float = 0.025
    min_lr_fraction: float = 1e-4
    min_count: int = 5
    n_min: int = 3
    n_max: int = 6
    bucket_count: int = 2 ** 18


@dataclass(frozen=True)
class TrainConfig:
    """Classifier training setup. Defaults are the supervised (t1) column."""
    task: str = "t1"
    model: str = "rcnn"
    batch_size: int = 128
    epochs: int = 10
    max_len: int = MAX_LEN
    embedding: str = "random_uniform"
    embed_dim: int = 256
    rnn_hidden: int = 256
    fc_hidden: int = 256
    learning_rate: float = 1e-3
    seed: int = 0
    min_count: int = 5
    init_scale: float = 0.05
    freeze_embeddings: bool = False
    dropout: float = 0.0
    cnn_widths: Tuple[int, ...] = (3, 4, 5)
    cnn_maps: int = 100
    linear_dim: int = 100
    word_ngrams: int = 2
    bigram_buckets: int = 2 ** 16
    svm_lambda: float = 1e-4
    svm_epochs: int = 5
    dtype: str = "float32"
    use_summary: bool = False

    @classmethod
    def for_task(cls, task="t1", **overrides):
        """Task defaults with explicit overrides applied on top."""
        task = task.lower()
        if task not in TASK_DEFAULTS:
            raise ConfigError("task", f"unknown task '{task}' (expected t1 or t2)")
        values = dict(TASK_DEFAULTS[task])
        values.update(overrides)
        values["task"] = task
        return cls(**values)

    def task_overrides(self):
        """Fields that deviate from the task's published setup."""
        expected = TASK_DEFAULTS.get(self.task, {})
        return {k: getattr(self, k) for k, v in expected.items() if getattr(self, k) != v}

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["cnn_widths"] = list(self.cnn_widths)
        return d

    def fingerprint(self, extra=None):
        """SHA-256 of the canonical JSON of this config (plus optional manifest data)."""
        payload = {"config": self.to_dict(), "extra": extra or {}}
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


CONFIG_SECTIONS = {
    "train": TrainConfig,
    "label": LabelConfig,
    "split": SplitSpec,
    "skipgram": SkipgramConfig,
}


def _coerce(value, target_type, key):
    """Convert a text value from a flat config file to the field's type."""
    if not isinstance(value, str):
        if target_type is float and isinstance(value, int):
            return float(value)
        if "Tuple" in str(target_type) and isinstance(value, list):
            return tuple(int(v) for v in value)
        return value
    text = value.strip()
    try:
        if target_type is bool:
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if target_type is int:
            return int(float(text)) if "e" in text.lower() else int(text)
        if target_type is float:
            return float(text)
        if "Tuple" in str(target_type):
            return tuple(int(p) for p in text.replace(",", " ").split())
    except ValueError:
        raise ConfigError(key, f"cannot parse value '{value}' for '{key}'")
    return text


def read_config_file(path):
    """
    Read a config file: JSON object or flat `key = value` lines.

    Parameters:
    -----------
    path : str
        Path to the config file

    Returns:
    --------
    dict
        Raw key/value pairs
    """
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    if text.lstrip().startswith("{"):
        return json.loads(text)
    values = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        sep = "=" if "=" in line else ":"
        if sep not in line:
            raise ConfigError(line, f"cannot parse config line '{raw}'")
        key, value = line.split(sep, 1)
        values[key.strip()] = value.strip()
    return values


def load_config(path=None, overrides=None, task=None, section="train"):
    """
    Resolve a config with precedence flags > file > published defaults.

    Parameters:
    -----------
    path : str, optional
        JSON or flat key-value config file
    overrides : dict, optional
        Values from command-line flags; None values are ignored
    task : str, optional
        "t1" or "t2" (train section only)
    section : str
        "train", "label", "split" or "skipgram"

    Returns:
    --------
    dataclass instance
        The resolved config
    """
    cls = CONFIG_SECTIONS[section]
    resolved_types = {f.name: _field_type(cls, f.name) for f in fields(cls)}

    merged = {}
    for source in (read_config_file(path) if path else {}, overrides or {}):
        for key, value in source.items():
            if value is None:
                continue
            if key not in resolved_types:
                raise ConfigError(key)
            merged[key] = _coerce(value, resolved_types[key], key)

    if cls is TrainConfig:
        chosen_task = merged.pop("task", None) or task or "t1"
        return TrainConfig.for_task(chosen_task, **merged)
    return cls(**merged)


def _field_type(cls, name):
    hints = {
        "int": int, "float": float, "bool": bool, "str": str,
    }
    for f in fields(cls):
        if f.name == name:
            t = f.type
            if isinstance(t, str):
                return hints.get(t, t)
            return t
    raise ConfigError(name)


def seed_override(seed=None):
    """Explicit seed, else HELPRANK_SEED from the environment, else None."""
    if seed is not None:
        return int(seed)
    env = os.getenv(SEED_ENV_VAR)
    if env is not None and env.strip() != "":
        try:
            return int(env)
        except ValueError:
            raise ConfigError(SEED_ENV_VAR, f"{SEED_ENV_VAR} must be an integer (got '{env}')")
    return None


def resolve_seed(seed=None):
    """Explicit seed, else HELPRANK_SEED from the environment, else 0."""
    value = seed_override(seed)
    return 0 if value is None else value


def derive_seed(seed, stage):
    """Stage-local seed: first 8 bytes of SHA-256("<seed>:<stage>") as an unsigned int."""
    digest = hashlib.sha256(f"{int(seed)}:{stage}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def normalize_category(name):
    """Map loose category spellings ("cds-and-vinyl", "Movies & TV") to canonical names."""
    if name is None:
        return "Other"
    key = "".join(ch for ch in str(name).lower() if ch.isalnum())
    aliases = {
        "books": "Books",
        "electronics": "Electronics",
        "cdsandvinyl": "CDsAndVinyl",
        "cdsvinyl": "CDsAndVinyl",
        "moviesandtv": "MoviesAndTV",
        "moviestv": "MoviesAndTV",
        "moviesandtvs": "MoviesAndTV",
    }
    return aliases.get(key, str(name))
