"""Matplotlib companions to the evaluation report.

Written next to the text/JSON report when requested: one chart for the
headline retrieval metrics, one for the per-alignment-class TP/FP split.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .evaluation import BREAKDOWN_CLASSES, EvalReport  # noqa: E402


def save_report_figures(report: EvalReport, out_dir: str | Path) -> list[Path]:
    """Render metrics.png and alignment.png into out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    names = ["Precision", "Recall", "F1"]
    values = [report.metrics.precision, report.metrics.recall, report.metrics.f1]
    bars = ax.bar(names, values, color=["#3c6e9f", "#5a8fbe", "#7fb0d8"])
    ax.bar_label(bars, fmt="%.3f")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("score")
    ax.set_title(f"Retrieval metrics (TP={report.counts.tp}, "
                 f"FP={report.counts.fp}, FN={report.counts.fn})")
    fig.tight_layout()
    metrics_path = out / "metrics.png"
    fig.savefig(metrics_path, dpi=120)
    plt.close(fig)
    written.append(metrics_path)

    fig, ax = plt.subplots(figsize=(5.2, 3.2))
    labels = [cls.value for cls in BREAKDOWN_CLASSES]
    tp_values = [report.per_alignment.get(cls, (0, 0))[0] for cls in BREAKDOWN_CLASSES]
    fp_values = [report.per_alignment.get(cls, (0, 0))[1] for cls in BREAKDOWN_CLASSES]
    positions = range(len(labels))
    width = 0.38
    ax.bar([p - width / 2 for p in positions], tp_values, width,
           label="TP", color="#4d8a5a")
    ax.bar([p + width / 2 for p in positions], fp_values, width,
           label="FP", color="#b0564a")
    ax.set_xticks(list(positions), labels, rotation=15)
    ax.set_ylabel("triples")
    ax.set_title("TP/FP by alignment class")
    ax.legend()
    fig.tight_layout()
    alignment_path = out / "alignment.png"
    fig.savefig(alignment_path, dpi=120)
    plt.close(fig)
    written.append(alignment_path)

    return written
