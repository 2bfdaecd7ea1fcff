"""
Reading review corpora and writing/reading prepared datasets and run manifests.
"""

import gzip
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from typing import Dict, Optional

from config import VERSION, normalize_category
from errors import HelprankError, ParseError
from review_corpus import (HelpfulnessLabel, LabeledDataset, LabeledExample, ReviewRecord,
                           UnlabeledPool, parse_review_record)

logger = logging.getLogger(__name__)

SPLIT_NAMES = ("train", "validation", "test")
POOL_FILE = "unlabeled.jsonl"
MANIFEST_FILE = "manifest.json"


def open_text(path, mode="rt"):
    """Open plain or gzipped text transparently."""
    if str(path).endswith(".gz"):
        return gzip.open(path, mode, encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def iter_records(path, category="Other", strict=True, skipped=None):
    """
    Stream ReviewRecords from a JSON-lines file (optionally gzipped).

    Parameters:
    -----------
    path : str
        Input file
    category : str
        Category assigned to every record
    strict : bool
        Raise on the first malformed line; otherwise log it and continue
    skipped : dict, optional
        Receives per-error-type counts of skipped lines when strict is False
    """
    with open_text(path) as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                yield parse_review_record(line, line_number=line_number, category=category)
            except HelprankError as e:
                if strict:
                    raise
                logger.warning("Skipping line %d of %s: %s", line_number, path, e.message)
                if skipped is not None:
                    name = type(e).__name__
                    skipped[name] = skipped.get(name, 0) + 1


def file_sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def text_sha256(text):
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _atomic_write_text(path, text):
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        f.write(text)
    os.replace(tmp, path)


def write_labeled(dataset, path):
    """One JSON object per example: text, label, category, source_votes and record key."""
    lines = []
    for ex in dataset.examples:
        r = ex.record
        lines.append(json.dumps({
            "text": ex.text,
            "label": ex.label.value,
            "category": dataset.category,
            "source_votes": [r.helpful_votes, r.total_votes],
            "reviewer_id": r.reviewer_id,
            "item_id": r.item_id,
        }, ensure_ascii=False))
    _atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))
    return path


def read_labeled(path, category=None):
    examples = []
    with open_text(path) as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                label = HelpfulnessLabel(raw["label"])
                text = raw["text"]
                helpful, total = raw.get("source_votes", [0, 0])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise ParseError(f"{path}:{line_number}: {e!r}", line_number=line_number)
            category = category or raw.get("category", "Other")
            record = ReviewRecord(reviewer_id=raw.get("reviewer_id", ""), item_id=raw.get("item_id", ""),
                                  helpful_votes=helpful, total_votes=total, review_text=text,
                                  category=normalize_category(category))
            examples.append(LabeledExample(text, label, record))
    return LabeledDataset(examples=tuple(examples), category=normalize_category(category or "Other"))


def write_pool(pool, path):
    lines = [json.dumps({"text": text, "category": pool.category, "source_votes": [0, 0],
                         "reviewer_id": key[0], "item_id": key[1]}, ensure_ascii=False)
             for text, key in zip(pool.texts, pool.keys or [("", "")] * len(pool.texts))]
    _atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))
    return path


def read_pool(path, category=None):
    texts, keys = [], []
    with open_text(path) as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                text = raw["text"]
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise ParseError(f"{path}:{line_number}: {e!r}", line_number=line_number)
            texts.append(text)
            keys.append((raw.get("reviewer_id", ""), raw.get("item_id", "")))
            category = category or raw.get("category")
    return UnlabeledPool(texts=tuple(texts), category=normalize_category(category or "Other"),
                         keys=tuple(keys))


@dataclass
class RunManifest:
    """Replay record written next to every artifact a command produces."""
    command: str
    config: dict
    seed: int
    inputs: Dict[str, str] = field(default_factory=dict)
    outputs: Dict[str, str] = field(default_factory=dict)
    counts: dict = field(default_factory=dict)
    version: str = VERSION
    argv: list = field(default_factory=list)
    started: str = ""
    finished: str = ""

    @classmethod
    def start(cls, command, config, seed, argv=None):
        return cls(command=command, config=config, seed=seed, argv=list(argv or sys.argv[1:]),
                   started=_now())

    def add_input(self, path):
        if os.path.isdir(path):
            manifest = os.path.join(path, MANIFEST_FILE)
            if os.path.exists(manifest):
                self.inputs[path] = file_sha256(manifest)
        elif os.path.exists(path):
            self.inputs[path] = file_sha256(path)

    def add_output(self, path):
        self.outputs[os.path.basename(path)] = file_sha256(path)

    def write(self, out_dir, name=MANIFEST_FILE):
        self.finished = _now()
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, name)
        _atomic_write_text(path, json.dumps(asdict(self), indent=2, sort_keys=True))
        return path

    @classmethod
    def read(cls, path):
        with open(path, "r", encoding="utf-8") as f:
            return cls(**json.load(f))


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def save_prepared(out_dir, splits, pool=None, manifest=None):
    """
    Write train/validation/test (and the unlabeled pool) into out_dir.

    Returns:
    --------
    dict
        File name -> path of everything written
    """
    os.makedirs(out_dir, exist_ok=True)
    written = {}
    for name in SPLIT_NAMES:
        written[name] = write_labeled(splits[name], os.path.join(out_dir, f"{name}.jsonl"))
    if pool is not None:
        written["unlabeled"] = write_pool(pool, os.path.join(out_dir, POOL_FILE))
    if manifest is not None:
        for path in written.values():
            manifest.add_output(path)
        written["manifest"] = manifest.write(out_dir)
    print(f"  Saved prepared data to {out_dir}")
    return written


@dataclass
class PreparedData:
    directory: str
    category: str
    splits: Dict[str, LabeledDataset]
    pool: Optional[UnlabeledPool] = None
    manifest: Optional[dict] = None

    def split_hash(self, name):
        """Order-independent hash of a split's texts, used to tie runs to the same data."""
        digests = sorted(text_sha256(t) for t in self.splits[name].texts)
        return hashlib.sha256("\n".join(digests).encode("ascii")).hexdigest()


def load_prepared(directory):
    """
    Load a directory written by save_prepared.

    Parameters:
    -----------
    directory : str
        Output directory of the prepare command

    Returns:
    --------
    PreparedData
    """
    manifest = None
    manifest_path = os.path.join(directory, MANIFEST_FILE)
    if os.path.exists(manifest_path):
        with open(manifest_path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
    category = (manifest or {}).get("counts", {}).get("category")
    splits = {}
    for name in SPLIT_NAMES:
        path = os.path.join(directory, f"{name}.jsonl")
        if not os.path.exists(path):
            raise FileNotFoundError(f"{path} not found; run prepare first")
        splits[name] = read_labeled(path, category=category)
    category = category or splits["train"].category
    pool_path = os.path.join(directory, POOL_FILE)
    pool = read_pool(pool_path, category=category) if os.path.exists(pool_path) else None
    logger.info("Loaded %s: train=%d validation=%d test=%d unlabeled=%d", directory,
                len(splits["train"]), len(splits["validation"]), len(splits["test"]),
                len(pool) if pool else 0)
    return PreparedData(directory=directory, category=category, splits=splits, pool=pool,
                        manifest=manifest)


def load_pool(path, category=None):
    """Unlabeled pool from a pool file or from a prepared directory holding one."""
    if os.path.isdir(path):
        path = os.path.join(path, POOL_FILE)
    if not os.path.exists(path):
        raise FileNotFoundError(f"{path} not found; run prepare with --unlabeled first")
    return read_pool(path, category=category)


def load_all_prepared(directories):
    """Load several prepared category directories keyed by category name."""
    data = {}
    for directory in directories:
        prepared = load_prepared(directory)
        data[prepared.category] = prepared
    print(f"Loaded {len(data)} categories: {', '.join(data)}")
    return data
