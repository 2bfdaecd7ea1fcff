"""
Shared fixtures: synthetic review lines, labeled datasets and prepared directories.
"""

import json

import numpy as np
import pytest

from config import SplitSpec
from data_loader import save_prepared
from review_corpus import (HelpfulnessLabel, LabeledDataset, LabeledExample, ReviewRecord,
                           UnlabeledPool, split_dataset)

GOOD_WORDS = ["detailed", "thorough", "accurate", "clear", "useful", "informative", "honest", "precise"]
BAD_WORDS = ["awful", "vague", "rant", "lazy", "wrong", "pointless", "boring", "sloppy"]
FILLER = ["the", "book", "this", "it", "was", "and", "a", "of", "story", "read"]


def review_line(text="A fine review.", helpful=(0, 0), overall=5.0, reviewer="R1", asin="A1", **extra):
    raw = {"reviewerID": reviewer, "asin": asin, "reviewerName": "Pat",
           "helpful": list(helpful) if isinstance(helpful, tuple) else helpful,
           "reviewText": text, "overall": overall, "summary": "Summary",
           "unixReviewTime": 1400000000, "reviewTime": "05 13, 2014"}
    raw.update(extra)
    return json.dumps(raw)


def make_record(text="a fine review", helpful=0, total=0, reviewer="R1", item="A1", **kw):
    return ReviewRecord(reviewer_id=reviewer, item_id=item, helpful_votes=helpful, total_votes=total,
                        review_text=text, **kw)


def synthetic_text(rng, label, length=12):
    """Filler words plus class-indicative words; the class is recoverable from the words."""
    words = GOOD_WORDS if label is HelpfulnessLabel.HELPFUL else BAD_WORDS
    tokens = list(rng.choice(FILLER, size=length - 3)) + list(rng.choice(words, size=3))
    rng.shuffle(tokens)
    return " ".join(tokens)


def labeled_dataset(n_per_class, seed=0, category="Books", length=12):
    rng = np.random.default_rng(seed)
    examples = []
    for label in HelpfulnessLabel:
        for i in range(n_per_class):
            text = f"{synthetic_text(rng, label, length)} n{label.index}x{i}"
            votes = (18, 20) if label is HelpfulnessLabel.HELPFUL else (2, 20)
            record = make_record(text, *votes, reviewer=f"R{label.index}-{i}", item=f"I{i}",
                                 category=category)
            examples.append(LabeledExample(text, label, record))
    order = rng.permutation(len(examples))
    return LabeledDataset(examples=tuple(examples[i] for i in order), category=category)


@pytest.fixture
def small_dataset():
    return labeled_dataset(60)


@pytest.fixture
def write_reviews(tmp_path):
    """Write review lines to a JSON-lines file and return its path."""
    def _write(lines, name="reviews.jsonl"):
        path = tmp_path / name
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return str(path)
    return _write


@pytest.fixture
def prepared_dir(tmp_path):
    """A prepared category directory with 60 examples per class and a small pool."""
    rng = np.random.default_rng(3)
    ds = labeled_dataset(60, seed=1)
    splits = split_dataset(ds, SplitSpec(seed=5))
    pool = UnlabeledPool(
        texts=tuple(synthetic_text(rng, HelpfulnessLabel(label), 12)
                    for label in ["helpful", "unhelpful"] * 100),
        category="Books",
        keys=tuple((f"U{i}", f"P{i}") for i in range(200)),
    )
    out = tmp_path / "prepared"
    save_prepared(str(out), splits, pool)
    return str(out)
