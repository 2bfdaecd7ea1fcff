"""
Review corpus: record parsing, helpfulness labeling, balanced extraction and splits.
"""

import json
import logging
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, Iterator, Optional, Tuple

import numpy as np
import pandas as pd

from config import VOTE_BINS, LabelConfig, SplitSpec, normalize_category
from errors import (EmptyCorpus, InvalidRating, InvalidVotes, MissingField,
                    ParseError, TooSmallToSplit, UndefinedRatio)
from text_pipeline import Tokenizer

logger = logging.getLogger(__name__)


class HelpfulnessLabel(Enum):
    """Two classes; HELPFUL is class index 0."""
    HELPFUL = "helpful"
    UNHELPFUL = "unhelpful"

    @property
    def index(self):
        return 0 if self is HelpfulnessLabel.HELPFUL else 1

    @classmethod
    def from_index(cls, index):
        return cls.HELPFUL if int(index) == 0 else cls.UNHELPFUL


class FilterDecision(Enum):
    ACCEPT_HELPFUL = "accept_helpful"
    ACCEPT_UNHELPFUL = "accept_unhelpful"
    REJECT_TOO_FEW_VOTES = "reject_too_few_votes"
    REJECT_AMBIGUOUS_RATIO = "reject_ambiguous_ratio"
    REJECT_TOO_LONG = "reject_too_long"
    ACCEPT_UNLABELED_ZERO_VOTE = "accept_unlabeled_zero_vote"

    @property
    def label(self):
        if self is FilterDecision.ACCEPT_HELPFUL:
            return HelpfulnessLabel.HELPFUL
        if self is FilterDecision.ACCEPT_UNHELPFUL:
            return HelpfulnessLabel.UNHELPFUL
        return None


@dataclass(frozen=True)
class ReviewRecord:
    reviewer_id: str
    item_id: str
    helpful_votes: int
    total_votes: int
    review_text: str
    summary: str = ""
    overall: float = 5.0
    unix_time: int = 0
    category: str = "Other"
    reviewer_name: str = ""
    review_time: str = ""

    @property
    def key(self):
        """Identity used for de-duplication across labeled and unlabeled data."""
        return (self.reviewer_id, self.item_id)


@dataclass(frozen=True)
class LabeledExample:
    text: str
    label: HelpfulnessLabel
    record: ReviewRecord


@dataclass(frozen=True)
class LabeledDataset:
    examples: Tuple[LabeledExample, ...]
    category: str
    shortfall: bool = False
    tallies: Dict[str, int] = field(default_factory=dict)

    def __len__(self):
        return len(self.examples)

    @property
    def balance(self):
        counts = Counter(ex.label for ex in self.examples)
        return {label.value: counts.get(label, 0) for label in HelpfulnessLabel}

    @property
    def texts(self):
        return [ex.text for ex in self.examples]

    @property
    def labels(self):
        return [ex.label for ex in self.examples]


@dataclass(frozen=True)
class UnlabeledPool:
    texts: Tuple[str, ...]
    category: str
    keys: Tuple[Tuple[str, str], ...] = ()
    shortfall: bool = False
    tallies: Dict[str, int] = field(default_factory=dict)

    def __len__(self):
        return len(self.texts)


def parse_review_record(line, line_number=None, category="Other"):
    """
    Parse one JSON review object into a ReviewRecord.

    Parameters:
    -----------
    line : str
        One JSON object as text
    line_number : int, optional
        Position in the source file, reported in errors
    category : str
        Category the record belongs to

    Returns:
    --------
    ReviewRecord
    """
    try:
        raw = json.loads(line)
    except (json.JSONDecodeError, TypeError) as e:
        raise ParseError(f"line {line_number}: {e}", line_number=line_number)
    if not isinstance(raw, dict):
        raise ParseError(f"line {line_number}: expected a JSON object", line_number=line_number)

    if "reviewText" not in raw:
        raise MissingField("reviewText", line_number=line_number)
    if "helpful" not in raw:
        raise MissingField("helpful", line_number=line_number)

    votes = raw["helpful"]
    if not isinstance(votes, (list, tuple)) or len(votes) != 2:
        raise InvalidVotes(f"line {line_number}: 'helpful' must be a [helpful, total] pair",
                           line_number=line_number)
    try:
        helpful, total = (int(v) for v in votes)
    except (TypeError, ValueError):
        raise InvalidVotes(f"line {line_number}: non-integer votes {votes}", line_number=line_number)
    if helpful < 0 or total < 0 or helpful > total:
        raise InvalidVotes(f"line {line_number}: invalid vote pair [{helpful}, {total}]",
                           line_number=line_number)

    overall = raw.get("overall", 5.0)
    try:
        overall = float(overall)
    except (TypeError, ValueError):
        raise InvalidRating(f"line {line_number}: rating '{overall}' is not a number",
                            line_number=line_number)
    if overall not in (1.0, 2.0, 3.0, 4.0, 5.0):
        raise InvalidRating(f"line {line_number}: rating {overall} outside 1..5",
                            line_number=line_number)

    return ReviewRecord(
        reviewer_id=str(raw.get("reviewerID", "")),
        item_id=str(raw.get("asin", "")),
        helpful_votes=helpful,
        total_votes=total,
        review_text=raw["reviewText"] or "",
        summary=raw.get("summary") or "",
        overall=overall,
        unix_time=int(raw.get("unixReviewTime") or 0),
        category=normalize_category(category),
        reviewer_name=raw.get("reviewerName") or "",
        review_time=raw.get("reviewTime") or "",
    )


def helpfulness_ratio(helpful_votes, total_votes):
    """helpful / total; zero-vote records have no ratio."""
    if total_votes < 1:
        raise UndefinedRatio("total_votes is 0; route the record to the unlabeled pool")
    return helpful_votes / total_votes


def model_text(record, use_summary=False):
    """Text the models see for a record."""
    if use_summary and record.summary:
        return f"{record.summary} {record.review_text}"
    return record.review_text


def assign_label(record, cfg=LabelConfig(), tokenizer=None):
    """
    Map a record to exactly one FilterDecision.

    Length is checked first, then zero votes, then the vote minimum, then the
    strict ratio thresholds.
    """
    tokenizer = tokenizer or Tokenizer()
    n_tokens = len(tokenizer.tokenize(model_text(record, cfg.use_summary)))
    if n_tokens > cfg.max_len:
        return FilterDecision.REJECT_TOO_LONG
    if record.total_votes == 0:
        return FilterDecision.ACCEPT_UNLABELED_ZERO_VOTE
    if record.total_votes < cfg.min_votes:
        return FilterDecision.REJECT_TOO_FEW_VOTES
    ratio = helpfulness_ratio(record.helpful_votes, record.total_votes)
    if ratio > cfg.helpful_min:
        return FilterDecision.ACCEPT_HELPFUL
    if ratio < cfg.unhelpful_max:
        return FilterDecision.ACCEPT_UNHELPFUL
    return FilterDecision.REJECT_AMBIGUOUS_RATIO


def _assign_chunk(args):
    records, cfg, tokenizer = args
    return [assign_label(r, cfg, tokenizer) for r in records]


def classify_records(stream, cfg=LabelConfig(), tokenizer=None, jobs=1, chunk_size=2000):
    """
    Yield (record, decision) in stream order.

    With jobs > 1 decisions are computed in worker processes; the output order is
    the input order, so downstream sampling does not depend on the worker count.
    """
    tokenizer = tokenizer or Tokenizer()
    if jobs <= 1:
        for record in stream:
            yield record, assign_label(record, cfg, tokenizer)
        return

    def chunks():
        buf = []
        for record in stream:
            buf.append(record)
            if len(buf) >= chunk_size:
                yield buf
                buf = []
        if buf:
            yield buf

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        for batch in _ordered_map(pool, chunks(), cfg, tokenizer, window=jobs * 2):
            yield from batch


def _ordered_map(pool, chunk_iter, cfg, tokenizer, window):
    pending = []
    for chunk in chunk_iter:
        pending.append((chunk, pool.submit(_assign_chunk, (chunk, cfg, tokenizer))))
        if len(pending) >= window:
            chunk0, fut = pending.pop(0)
            yield list(zip(chunk0, fut.result()))
    for chunk0, fut in pending:
        yield list(zip(chunk0, fut.result()))


class _Reservoir:
    """Uniform fixed-size sample of a stream (Algorithm R)."""

    def __init__(self, capacity, rng):
        self.capacity = capacity
        self.rng = rng
        self.items = []
        self.seen = 0

    def offer(self, item):
        self.seen += 1
        if len(self.items) < self.capacity:
            self.items.append(item)
            return
        j = int(self.rng.integers(0, self.seen))
        if j < self.capacity:
            self.items[j] = item


def build_labeled_set(stream, target_per_class, cfg=LabelConfig(), seed=0,
                      tokenizer=None, jobs=1, category=None):
    """
    Extract a balanced labeled dataset from a single-category record stream.

    Parameters:
    -----------
    stream : iterable of ReviewRecord
        Records of one category
    target_per_class : int
        Helpful and unhelpful examples wanted per class
    cfg : LabelConfig
        Labeling thresholds
    seed : int
        Seed for reservoir sampling and the final shuffle
    tokenizer : Tokenizer, optional
        Tokenizer used for the length rule
    jobs : int
        Worker processes for labeling

    Returns:
    --------
    LabeledDataset
        Shuffled, balanced examples plus per-outcome tallies of the whole stream
    """
    rng = np.random.default_rng(seed)
    reservoirs = {label: _Reservoir(target_per_class, rng) for label in HelpfulnessLabel}
    tallies = Counter()
    n_records = 0

    for record, decision in classify_records(stream, cfg, tokenizer, jobs):
        n_records += 1
        tallies[decision.value] += 1
        if category is None:
            category = record.category
        if decision.label is not None:
            reservoirs[decision.label].offer(record)

    if n_records == 0:
        raise EmptyCorpus("record stream is empty")

    # Shuffle each reservoir before any truncation so a truncated class is still uniform
    pools = {}
    for label, res in reservoirs.items():
        items = list(res.items)
        order = rng.permutation(len(items))
        pools[label] = [items[i] for i in order]

    keep = min(target_per_class, *(len(p) for p in pools.values()))
    shortfall = keep < target_per_class
    if shortfall:
        logger.warning(
            "Shortfall: wanted %d per class, available helpful=%d unhelpful=%d; keeping %d per class",
            target_per_class, len(pools[HelpfulnessLabel.HELPFUL]),
            len(pools[HelpfulnessLabel.UNHELPFUL]), keep)

    examples = []
    for label in HelpfulnessLabel:
        for record in pools[label][:keep]:
            examples.append(LabeledExample(model_text(record, cfg.use_summary), label, record))
    order = rng.permutation(len(examples))
    examples = tuple(examples[i] for i in order)

    logger.info("Labeled set: %d examples from %d records (%s)", len(examples), n_records,
                ", ".join(f"{k}={v}" for k, v in sorted(tallies.items())))
    return LabeledDataset(examples=examples, category=category or "Other",
                          shortfall=shortfall, tallies=dict(tallies))


def build_unlabeled_pool(stream, target, cfg=LabelConfig(), seed=0, tokenizer=None,
                         exclude_keys=None, jobs=1, category=None):
    """
    Sample zero-vote, length-bounded review texts for embedding pre-training.

    Records whose (reviewer_id, item_id) is in exclude_keys are skipped so the pool
    never duplicates labeled reviews.
    """
    rng = np.random.default_rng(seed)
    reservoir = _Reservoir(target, rng)
    tallies = Counter()
    exclude_keys = exclude_keys or set()
    n_records = 0

    for record, decision in classify_records(stream, cfg, tokenizer, jobs):
        n_records += 1
        tallies[decision.value] += 1
        if category is None:
            category = record.category
        if decision is FilterDecision.ACCEPT_UNLABELED_ZERO_VOTE and record.key not in exclude_keys:
            reservoir.offer(record)

    if n_records == 0:
        raise EmptyCorpus("record stream is empty")

    items = list(reservoir.items)
    items = [items[i] for i in rng.permutation(len(items))]
    shortfall = len(items) < target
    if shortfall:
        logger.warning("Shortfall: wanted %d zero-vote reviews, found %d", target, len(items))

    return UnlabeledPool(
        texts=tuple(model_text(r, cfg.use_summary) for r in items),
        category=category or "Other",
        keys=tuple(r.key for r in items),
        shortfall=shortfall,
        tallies=dict(tallies),
    )


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def split_dataset(ds, spec=SplitSpec()):
    """
    Stratified, seed-deterministic train/validation/test partition.

    Per class: test = round(n * test_frac); validation = round(rest * val_frac_of_train);
    train = the remainder. Rounding is half-up.

    Parameters:
    -----------
    ds : LabeledDataset
        Balanced dataset
    spec : SplitSpec
        Fractions and seed

    Returns:
    --------
    dict
        {'train': LabeledDataset, 'validation': LabeledDataset, 'test': LabeledDataset}
    """
    by_class = {label: [] for label in HelpfulnessLabel}
    for ex in ds.examples:
        by_class[ex.label].append(ex)

    smallest = min(len(v) for v in by_class.values())
    if smallest < 10:
        raise TooSmallToSplit(f"need at least 10 examples per class to split (smallest class has {smallest})")

    rng = np.random.default_rng(spec.seed)
    parts = {"train": [], "validation": [], "test": []}
    for label in HelpfulnessLabel:
        members = by_class[label]
        order = rng.permutation(len(members))
        n = len(members)
        n_test = _round_half_up(n * spec.test_frac)
        n_val = _round_half_up((n - n_test) * spec.val_frac_of_train)
        shuffled = [members[i] for i in order]
        parts["test"].extend(shuffled[:n_test])
        parts["validation"].extend(shuffled[n_test:n_test + n_val])
        parts["train"].extend(shuffled[n_test + n_val:])

    splits = {}
    for name in ("train", "validation", "test"):
        items = parts[name]
        order = rng.permutation(len(items))
        splits[name] = LabeledDataset(examples=tuple(items[i] for i in order),
                                      category=ds.category)
    logger.info("Split %s: train=%d validation=%d test=%d", ds.category,
                len(splits["train"]), len(splits["validation"]), len(splits["test"]))
    return splits


def vote_bin(total_votes):
    """Label of the voting-distribution bin holding total_votes."""
    for name, low, high in VOTE_BINS:
        if total_votes >= low and (high is None or total_votes <= high):
            return name
    raise InvalidVotes(f"negative vote count {total_votes}")


@dataclass(frozen=True)
class VotingDistributionReport:
    counts: Dict[str, int]
    total: int
    category: str = "Other"

    @property
    def percentages(self):
        if self.total == 0:
            return {name: 0.0 for name in self.counts}
        return {name: 100.0 * c / self.total for name, c in self.counts.items()}

    def to_frame(self):
        pct = self.percentages
        return pd.DataFrame({
            "Bin": list(self.counts),
            "Reviews": [self.counts[b] for b in self.counts],
            "Percent": [round(pct[b], 4) for b in self.counts],
        })

    def to_dict(self):
        return {"category": self.category, "total": self.total,
                "counts": dict(self.counts), "percentages": self.percentages}


def corpus_stats(stream, category=None):
    """
    Voting distribution of a record stream over the six vote bins.

    Returns:
    --------
    VotingDistributionReport
    """
    counts = {name: 0 for name, _, _ in VOTE_BINS}
    total = 0
    for record in stream:
        counts[vote_bin(record.total_votes)] += 1
        total += 1
        if category is None:
            category = record.category
    return VotingDistributionReport(counts=counts, total=total, category=category or "Other")


def print_corpus_stats(report):
    """Print a voting distribution report."""
    print("\n" + "=" * 70)
    print(f"VOTING DISTRIBUTION: {report.category}")
    print("=" * 70)
    print(report.to_frame().to_string(index=False))
    print(f"\nTotal reviews: {report.total:,}")
    print("=" * 70)
