"""
Tests for configuration validation.
"""

import pytest

from config import LabelConfig, SkipgramConfig, SplitSpec, TrainConfig
from parameter_validator import (merge_results, print_validation_results, validate_label_config,
                                 validate_skipgram_config, validate_split_spec, validate_train_config)


@pytest.mark.parametrize("task", ["t1", "t2"])
def test_published_setups_are_valid(task):
    results = validate_train_config(TrainConfig.for_task(task))
    assert results['valid']
    assert results['errors'] == []
    assert results['warnings'] == []


def test_train_config_errors():
    cfg = TrainConfig.for_task("t1", batch_size=0, learning_rate=0.0, rnn_hidden=0, dropout=1.0,
                               word_ngrams=3, model="bert")
    results = validate_train_config(cfg)
    assert not results['valid']
    assert len(results['errors']) == 6


def test_train_config_warnings():
    results = validate_train_config(TrainConfig.for_task("t1", epochs=0, learning_rate=0.1))
    assert results['valid']
    text = " ".join(results['warnings'])
    assert "epochs = 0" in text
    assert "learning_rate" in text
    assert "Overrides" in text


def test_small_training_split():
    results = validate_train_config(TrainConfig.for_task("t1"), n_train=100)
    assert results['valid']
    assert results['recommendations']
    assert not validate_train_config(TrainConfig.for_task("t1"), n_train=1)['valid']


def test_label_config():
    assert validate_label_config(LabelConfig())['valid']
    assert not validate_label_config(LabelConfig(helpful_min=0.3, unhelpful_max=0.5))['valid']
    assert validate_label_config(LabelConfig(min_votes=3))['warnings']


def test_split_spec():
    assert validate_split_spec(SplitSpec())['valid']
    assert validate_split_spec(SplitSpec(val_frac_of_train=0.0))['warnings']
    assert not validate_split_spec(SplitSpec(), n_per_class=5)['valid']


def test_skipgram_config():
    assert validate_skipgram_config(SkipgramConfig())['valid']
    assert not validate_skipgram_config(SkipgramConfig(n_min=7, n_max=6))['valid']
    assert not validate_skipgram_config(SkipgramConfig(window=0))['valid']
    assert validate_skipgram_config(SkipgramConfig(), corpus_tokens=500)['recommendations']


def test_merge_and_print(capsys):
    merged = merge_results(validate_label_config(LabelConfig(min_votes=0)),
                           validate_split_spec(SplitSpec(val_frac_of_train=0.0)))
    assert not merged['valid']
    assert len(merged['errors']) == 1 and len(merged['warnings']) == 1
    print_validation_results(merged)
    out = capsys.readouterr().out
    assert "[INVALID]" in out
    assert "ERRORS (must fix):" in out
