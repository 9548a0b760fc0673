"""Evaluation report output: delimited metrics tables plus rendered figures."""

from __future__ import annotations

from pathlib import Path

from .retriever import RetrievalMetrics

METRICS_COLUMNS = ("config", "recall_at_k", "mrr", "k", "query_count")


def metrics_rows(results: list[tuple[str, RetrievalMetrics]]) -> list[list[str]]:
    rows = [list(METRICS_COLUMNS)]
    for label, m in results:
        rows.append([label, f"{m.recall_at_k:.4f}", f"{m.mrr:.4f}",
                     str(m.k), str(m.query_count)])
    return rows


def format_metrics_table(results: list[tuple[str, RetrievalMetrics]]) -> str:
    return "\n".join("\t".join(row) for row in metrics_rows(results)) + "\n"


def write_metrics_table(results: list[tuple[str, RetrievalMetrics]], path) -> Path:
    path = Path(path)
    path.write_text(format_metrics_table(results), encoding="utf-8")
    return path


def render_metrics_figure(results: list[tuple[str, RetrievalMetrics]], path) -> Path:
    """Bar chart of recall@k and MRR per configuration, written to path."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels = [label for label, _ in results]
    recalls = [m.recall_at_k for _, m in results]
    mrrs = [m.mrr for _, m in results]
    x = range(len(labels))
    width = 0.38

    fig, ax = plt.subplots(figsize=(max(6.0, 1.6 * len(labels) + 3), 4.0))
    ax.bar([i - width / 2 for i in x], recalls, width,
           label=f"recall@{results[0][1].k}", color="#2c7fb8")
    ax.bar([i + width / 2 for i in x], mrrs, width, label="MRR", color="#7fcdbb")
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels, rotation=20, ha="right")
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("score")
    ax.set_title("Retrieval quality")
    ax.legend()
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
