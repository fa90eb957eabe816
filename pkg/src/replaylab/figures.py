"""Report figures: accuracy and forgetting against the per-class budget.

One line per method+regularizer combination, error bars over seeds when
more than one seed contributed. Rendered headless to PNG files next to
the delimited output.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def _series(summary_rows):
    by_combo = {}
    for row in summary_rows:
        key = row["method"] if row["regularizer"] == "none" else f"{row['method']}+{row['regularizer']}"
        by_combo.setdefault(key, []).append(row)
    for rows in by_combo.values():
        rows.sort(key=lambda r: r["budget"])
    return dict(sorted(by_combo.items()))


def _render(summary_rows, metric, ylabel, title, path):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, rows in _series(summary_rows).items():
        budgets = [r["budget"] for r in rows]
        means = [r[f"{metric}_mean"] for r in rows]
        stds = [r[f"{metric}_std"] for r in rows]
        ax.errorbar(budgets, means, yerr=stds, marker="o", capsize=3, label=label)
    ax.set_xlabel("per-class buffer budget")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_figures(summary_rows, out_dir):
    """Write acc_vs_budget.png and fr_vs_budget.png; returns their paths."""
    if not summary_rows:
        return []
    os.makedirs(out_dir, exist_ok=True)
    return [
        _render(summary_rows, "acc", "average accuracy",
                "Average accuracy vs. buffer budget",
                os.path.join(out_dir, "acc_vs_budget.png")),
        _render(summary_rows, "fr", "forgetting rate",
                "Forgetting vs. buffer budget",
                os.path.join(out_dir, "fr_vs_budget.png")),
    ]
