"""
Parameter validation for training, labeling, splitting and skip-gram configs.
"""

from config import MODEL_KINDS, TASK_DEFAULTS


def _new_results():
    return {
        'valid': True,
        'warnings': [],
        'errors': [],
        'recommendations': []
    }


def _error(results, message):
    results['valid'] = False
    results['errors'].append(message)


def validate_train_config(cfg, n_train=None) -> dict:
    """
    Validate a TrainConfig, optionally against the size of the training split.

    Parameters:
    -----------
    cfg : TrainConfig
        Resolved training configuration
    n_train : int, optional
        Number of labeled training examples available

    Returns:
    --------
    dict
        Validation results with 'valid', 'warnings', 'errors' and 'recommendations'
    """
    results = _new_results()

    # Check 1: task and model kind
    if cfg.task not in TASK_DEFAULTS:
        _error(results, f"Unknown task '{cfg.task}'. Use t1 (supervised) or t2 (semi-supervised).")
    if cfg.model not in MODEL_KINDS:
        _error(results, f"Unknown model '{cfg.model}'. Choose one of {', '.join(MODEL_KINDS)}.")

    # Check 2: optimization
    if cfg.batch_size < 1:
        _error(results, f"batch_size must be positive (got {cfg.batch_size})")
    if cfg.epochs < 0:
        _error(results, f"epochs must be >= 0 (got {cfg.epochs})")
    elif cfg.epochs == 0:
        results['warnings'].append("epochs = 0: the model stays at its random initialization.")
    if not cfg.learning_rate > 0:
        _error(results, f"learning_rate must be positive (got {cfg.learning_rate})")
    elif cfg.learning_rate > 0.01:
        results['warnings'].append(
            f"learning_rate {cfg.learning_rate} is high for Adam. Training may diverge."
        )

    # Check 3: shapes
    for name in ("max_len", "embed_dim", "rnn_hidden", "fc_hidden", "cnn_maps", "linear_dim"):
        value = getattr(cfg, name)
        if value < 1:
            _error(results, f"{name} must be positive (got {value})")
    if any(w < 1 for w in cfg.cnn_widths) or not cfg.cnn_widths:
        _error(results, f"cnn_widths must be positive integers (got {list(cfg.cnn_widths)})")
    if not 0.0 <= cfg.dropout < 1.0:
        _error(results, f"dropout must be in [0, 1) (got {cfg.dropout})")
    if cfg.word_ngrams not in (1, 2):
        _error(results, f"word_ngrams must be 1 or 2 (got {cfg.word_ngrams})")
    if cfg.svm_lambda <= 0:
        _error(results, f"svm_lambda must be positive (got {cfg.svm_lambda})")
    if cfg.dtype not in ("float32", "float64"):
        _error(results, f"dtype must be float32 or float64 (got {cfg.dtype})")

    # Check 4: deviations from the published setup
    overrides = cfg.task_overrides()
    if overrides:
        results['warnings'].append(
            f"Overrides of the {cfg.task} setup will be recorded in the report: {overrides}"
        )
    if cfg.task == "t2" and cfg.embedding != "skipgram_subword":
        results['recommendations'].append(
            "t2 is meant to start from a skip-gram table. Pass --embeddings or a prepared unlabeled pool."
        )

    # Check 5: data volume
    if n_train is not None:
        if n_train < 2:
            _error(results, f"Only {n_train} training examples. Need at least 2.")
        elif n_train < cfg.batch_size:
            results['warnings'].append(
                f"Training split ({n_train}) is smaller than one batch ({cfg.batch_size})."
            )
        if n_train and n_train < 1000 and cfg.model == "rcnn" and cfg.rnn_hidden >= 256:
            results['recommendations'].append(
                "Small training split: consider --rnn-hidden/--embed-dim of 16-64 for desk-scale runs."
            )

    return results


def validate_label_config(cfg) -> dict:
    """Validate a LabelConfig: thresholds must leave a gap between the classes."""
    results = _new_results()
    if not 0.0 <= cfg.unhelpful_max <= cfg.helpful_min <= 1.0:
        _error(results, f"Need 0 <= unhelpful_max ({cfg.unhelpful_max}) <= helpful_min "
                        f"({cfg.helpful_min}) <= 1")
    if cfg.min_votes < 1:
        _error(results, f"min_votes must be >= 1 (got {cfg.min_votes})")
    elif cfg.min_votes < 10:
        results['warnings'].append(
            f"min_votes = {cfg.min_votes}: ratios from few votes are noisy labels."
        )
    if cfg.max_len < 1:
        _error(results, f"max_len must be positive (got {cfg.max_len})")
    return results


def validate_split_spec(spec, n_per_class=None) -> dict:
    """Validate a SplitSpec, optionally against the per-class example count."""
    results = _new_results()
    if not 0.0 < spec.test_frac < 1.0:
        _error(results, f"test_frac must be in (0, 1) (got {spec.test_frac})")
    if spec.val_frac_of_train == 0.0:
        results['warnings'].append("No validation split: model selection falls back to the last epoch.")
    if n_per_class is not None and n_per_class < 10:
        _error(results, f"Only {n_per_class} examples per class. Need at least 10 to split.")
    return results


def validate_skipgram_config(cfg, corpus_tokens=None) -> dict:
    """Validate a SkipgramConfig, optionally against the corpus size in tokens."""
    results = _new_results()
    for name in ("dim", "window", "negatives", "epochs", "min_count", "bucket_count"):
        value = getattr(cfg, name)
        if value < 1:
            _error(results, f"{name} must be positive (got {value})")
    if not 1 <= cfg.n_min <= cfg.n_max:
        _error(results, f"Need 1 <= n_min ({cfg.n_min}) <= n_max ({cfg.n_max})")
    if not cfg.initial_lr > 0:
        _error(results, f"initial_lr must be positive (got {cfg.initial_lr})")
    if not 0.0 < cfg.min_lr_fraction <= 1.0:
        _error(results, f"min_lr_fraction must be in (0, 1] (got {cfg.min_lr_fraction})")
    if cfg.subsample_t <= 0:
        _error(results, f"subsample_t must be positive (got {cfg.subsample_t})")
    if corpus_tokens is not None and corpus_tokens < 100_000:
        results['recommendations'].append(
            f"Corpus has {corpus_tokens} tokens. Consider min_count 1-2 and subsample_t 1e-3 at this scale."
        )
    return results


def merge_results(*parts) -> dict:
    """Combine several validation dicts into one."""
    results = _new_results()
    for part in parts:
        results['valid'] = results['valid'] and part['valid']
        for key in ('warnings', 'errors', 'recommendations'):
            results[key].extend(part[key])
    return results


def print_validation_results(results: dict):
    """Print validation results in a user-friendly format."""
    print("\n" + "=" * 70)
    print("PARAMETER VALIDATION")
    print("=" * 70)

    if results['valid']:
        print("\n[VALID] Configuration is valid")
    else:
        print("\n[INVALID] Configuration is INVALID - cannot proceed")

    if results['errors']:
        print("\nERRORS (must fix):")
        for i, error in enumerate(results['errors'], 1):
            print(f"  {i}. {error}")

    if results['warnings']:
        print("\nWARNINGS (review recommended):")
        for i, warning in enumerate(results['warnings'], 1):
            print(f"  {i}. {warning}")

    if results['recommendations']:
        print("\nRECOMMENDATIONS:")
        for i, rec in enumerate(results['recommendations'], 1):
            print(f"  {i}. {rec}")

    if results['valid'] and not results['warnings']:
        print("\n[OK] No issues detected - configuration looks good!")

    print("=" * 70)
