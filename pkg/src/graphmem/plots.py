"""Figure rendering for evaluation reports; written next to the JSON/JSONL output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .evaluation import EvalReport, ExpansionCurve  # noqa: E402


def plot_retrieval_report(report: EvalReport, path: str | Path) -> Path:
    values = [r["recall_at_5"] for r in report.per_query if "recall_at_5" in r]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(values, bins=11, range=(0.0, 1.0), color="#4878cf", edgecolor="white")
    ax.axvline(report.aggregates["recall_at_5"], color="#d65f5f", linestyle="--",
               label=f"mean recall@5 = {report.aggregates['recall_at_5']:.3f}")
    ax.set_xlabel("recall@5")
    ax.set_ylabel("queries")
    ax.set_title("Retrieval recall distribution")
    ax.legend()
    return _save(fig, path)


def plot_qa_report(report: EvalReport, path: str | Path) -> Path:
    values = [r["f1"] for r in report.per_query if "f1" in r]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(values, bins=11, range=(0.0, 1.0), color="#6acc65", edgecolor="white")
    ax.axvline(report.aggregates["f1"], color="#d65f5f", linestyle="--",
               label=f"mean F1 = {report.aggregates['f1']:.3f}")
    ax.axvline(report.aggregates["em"], color="#956cb4", linestyle=":",
               label=f"mean EM = {report.aggregates['em']:.3f}")
    ax.set_xlabel("token F1")
    ax.set_ylabel("queries")
    ax.set_title("QA score distribution")
    ax.legend()
    return _save(fig, path)


def plot_expansion_curve(curve: ExpansionCurve, path: str | Path) -> Path:
    xs = [p[0] for p in curve.points]
    ys = [p[1] for p in curve.points]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(xs, ys, marker="o", color="#4878cf")
    ax.set_xticks(xs)
    ax.set_xlabel("segments indexed")
    ax.set_ylabel(curve.metric_name)
    ax.set_ylim(0.0, 1.05)
    ax.set_title("Corpus expansion")
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_ablation(reports: list[EvalReport], path: str | Path,
                  metric: str = "recall_at_5") -> Path:
    labels = [r.label or f"mode {i}" for i, r in enumerate(reports)]
    values = [r.aggregates.get(metric, 0.0) for r in reports]
    fig, ax = plt.subplots(figsize=(max(6, 1.2 * len(labels)), 4))
    ax.bar(range(len(labels)), values, color="#4878cf")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=20, ha="right")
    ax.set_ylabel(f"mean {metric}")
    ax.set_ylim(0.0, 1.05)
    ax.set_title("Ablation comparison")
    for i, value in enumerate(values):
        ax.text(i, value + 0.02, f"{value:.3f}", ha="center", fontsize=9)
    return _save(fig, path)


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
