"""
Visualization of corpus statistics, training curves and accuracy comparisons.
"""

import matplotlib
matplotlib.use('Agg')  # Use non-interactive backend
import matplotlib.pyplot as plt
import numpy as np


def _finish(save_path):
    plt.tight_layout()
    if save_path:
        plt.savefig(save_path, dpi=150, bbox_inches='tight')
        print(f"  Saved plot to {save_path}")
        plt.close()
    else:
        plt.show()


def plot_voting_distribution(report, figsize=(10, 5), save_path=None):
    """
    Bar chart of the share of reviews per helpfulness-vote bin.

    Parameters:
    -----------
    report : VotingDistributionReport
        Output of corpus_stats
    figsize : tuple
        Figure size
    save_path : str, optional
        If provided, save plot to this path instead of displaying
    """
    pct = report.percentages
    bins = list(pct)
    fig, ax = plt.subplots(figsize=figsize)
    bars = ax.bar(bins, [pct[b] for b in bins], color='steelblue', alpha=0.8)
    for bar, b in zip(bars, bins):
        ax.annotate(f"{pct[b]:.1f}%", (bar.get_x() + bar.get_width() / 2, bar.get_height()),
                    ha='center', va='bottom', fontsize=9)

    ax.set_xlabel('Total helpfulness votes', fontsize=11)
    ax.set_ylabel('Reviews (%)', fontsize=11)
    ax.set_title(f"{report.category} - Voting Distribution ({report.total:,} reviews)",
                 fontsize=13, fontweight='bold')
    ax.grid(True, alpha=0.3, axis='y')
    _finish(save_path)


def plot_validation_curves(report, figsize=(12, 5), save_path=None):
    """
    Validation accuracy per epoch for every category of an ExperimentReport.

    The selected epoch of each category is marked.
    """
    fig, ax = plt.subplots(figsize=figsize)
    for name in sorted(report.categories):
        result = report.categories[name]
        curve = result.validation_curve
        if not curve:
            continue
        epochs = np.arange(1, len(curve) + 1)
        line, = ax.plot(epochs, np.asarray(curve) * 100, marker='o', linewidth=2, alpha=0.8, label=name)
        if 1 <= result.selected_epoch <= len(curve):
            ax.scatter([result.selected_epoch], [curve[result.selected_epoch - 1] * 100],
                       s=120, facecolors='none', edgecolors=line.get_color(), linewidths=2)

    ax.set_xlabel('Epoch', fontsize=11)
    ax.set_ylabel('Validation accuracy (%)', fontsize=11)
    ax.set_title(f"{report.task.upper()} {report.model.upper()} - Validation Accuracy",
                 fontsize=13, fontweight='bold')
    ax.legend(loc='best')
    ax.grid(True, alpha=0.3)
    _finish(save_path)


def plot_accuracy_comparison(table, figsize=(12, 6), save_path=None):
    """
    Grouped bars of per-category accuracy for two reports, annotated with the delta.

    Parameters:
    -----------
    table : ComparisonTable
        Output of compare_reports
    """
    frame = table.frame
    acc_a = frame[f"Accuracy {table.label_a}"].to_numpy(dtype=float)
    acc_b = frame[f"Accuracy {table.label_b}"].to_numpy(dtype=float)
    x = np.arange(len(frame))
    width = 0.38

    fig, ax = plt.subplots(figsize=figsize)
    ax.bar(x - width / 2, acc_a, width, label=table.label_a, color='gray', alpha=0.8)
    ax.bar(x + width / 2, acc_b, width, label=table.label_b, color='green', alpha=0.8)
    for i, delta in enumerate(frame["Delta"]):
        ax.annotate(f"{delta:+.2f}", (x[i], max(acc_a[i], acc_b[i]) + 0.5), ha='center', fontsize=9)

    ax.set_xticks(x)
    ax.set_xticklabels(frame["Category"])
    ax.set_ylabel('Test accuracy (%)', fontsize=11)
    low = float(np.nanmin(np.concatenate([acc_a, acc_b])))
    ax.set_ylim(max(0.0, low - 10), 100)
    ax.set_title('Accuracy Comparison by Category', fontsize=14, fontweight='bold')
    ax.legend(loc='lower right')
    ax.grid(True, alpha=0.3, axis='y')
    _finish(save_path)


def plot_model_comparison(frame, figsize=(12, 6), save_path=None):
    """Grouped bars from model_comparison_table: one group per category, one bar per model."""
    models = [c for c in frame.columns if c != "Category"]
    x = np.arange(len(frame))
    width = 0.8 / max(len(models), 1)
    fig, ax = plt.subplots(figsize=figsize)
    colors = plt.cm.viridis(np.linspace(0.1, 0.9, len(models)))
    for j, model in enumerate(models):
        ax.bar(x + (j - (len(models) - 1) / 2) * width, frame[model].to_numpy(dtype=float), width,
               label=model, color=colors[j], alpha=0.85)
    ax.set_xticks(x)
    ax.set_xticklabels(frame["Category"])
    ax.set_ylabel('Test accuracy (%)', fontsize=11)
    ax.set_title('Classifier Comparison', fontsize=14, fontweight='bold')
    ax.legend(loc='lower right')
    ax.grid(True, alpha=0.3, axis='y')
    _finish(save_path)
