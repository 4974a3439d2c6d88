"""Dataset and evaluation reports: delimited tables plus rendered figures.

Every report path writes machine-readable CSV/JSON and renders the same
numbers as PNG figures next to them, so a report directory is complete
on its own. Rendering uses the Agg backend and never needs a display.
"""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Any, Mapping

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

logger = logging.getLogger(__name__)

_PROVENANCE_COLORS = {"llm": "#4878cf", "human": "#6acc65", "hybrid": "#d65f5f"}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def _metric_counts_figure(stats: Mapping[str, Any], path: Path) -> Path:
    metrics = stats.get("metrics", {})
    names = list(metrics)
    provenances = ["llm", "human", "hybrid"]
    fig, ax = plt.subplots(figsize=(max(6.0, 1.1 * len(names)), 4.0))
    x = range(len(names))
    bottom = [0.0] * len(names)
    for prov in provenances:
        counts = [metrics[m]["by_provenance"].get(prov, 0) for m in names]
        ax.bar(x, counts, bottom=bottom, label=prov, color=_PROVENANCE_COLORS.get(prov))
        bottom = [b + c for b, c in zip(bottom, counts)]
    ax.set_xticks(list(x))
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylabel("records with a value")
    ax.set_title("Values per target metric by provenance")
    ax.legend()
    return _save(fig, path)


def _uncertainty_figure(stats: Mapping[str, Any], path: Path) -> Path:
    metrics = stats.get("metrics", {})
    names = list(metrics)
    fracs = [100.0 * metrics[m]["uncertainty_fraction"] for m in names]
    fig, ax = plt.subplots(figsize=(max(6.0, 1.1 * len(names)), 4.0))
    ax.bar(range(len(names)), fracs, color="#4878cf")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylabel("% of values with uncertainty")
    ax.set_ylim(0, 100)
    ax.set_title("Reported uncertainty per target metric")
    return _save(fig, path)


def write_stats_report(out_dir: str | Path, stats: Mapping[str, Any]) -> dict[str, Path]:
    """stats.json + stats.csv + two figures, all derived from one dict."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}

    json_path = out / "stats.json"
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(stats, fh, ensure_ascii=False, sort_keys=True, indent=2)
        fh.write("\n")
    paths["json"] = json_path

    csv_path = out / "stats.csv"
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "field", "total", "llm", "human", "hybrid",
                         "with_uncertainty", "uncertainty_fraction"])
        for key, row in stats.get("metrics", {}).items():
            prov = row["by_provenance"]
            writer.writerow([
                key, row["field"], row["total"],
                prov.get("llm", 0), prov.get("human", 0), prov.get("hybrid", 0),
                row["with_uncertainty"], f"{row['uncertainty_fraction']:.4f}",
            ])
    paths["csv"] = csv_path

    paths["metric_counts_png"] = _metric_counts_figure(stats, out / "metric_counts.png")
    paths["uncertainty_png"] = _uncertainty_figure(stats, out / "uncertainty.png")
    logger.info("stats report written to %s", out)
    return paths


def _agreement_figure(report: Mapping[str, Any], path: Path) -> Path:
    rows = report.get("per_article", [])
    ids = [r["article_id"] for r in rows]
    precision = [100.0 * (r["precision"] or 0.0) for r in rows]
    recall = [100.0 * (r["recall"] or 0.0) for r in rows]
    width = 0.4
    fig, ax = plt.subplots(figsize=(max(6.0, 0.9 * len(ids)), 4.0))
    x = range(len(ids))
    ax.bar([i - width / 2 for i in x], precision, width, label="precision", color="#4878cf")
    ax.bar([i + width / 2 for i in x], recall, width, label="recall", color="#6acc65")
    micro = report.get("micro", {})
    if micro:
        ax.axhline(100.0 * (micro.get("experiment_precision") or 0.0),
                   color="#4878cf", ls="--", lw=1)
        ax.axhline(100.0 * (micro.get("experiment_recall") or 0.0),
                   color="#6acc65", ls="--", lw=1)
    ax.set_xticks(list(x))
    ax.set_xticklabels(ids, rotation=30, ha="right")
    ax.set_ylabel("%")
    ax.set_ylim(0, 105)
    ax.set_title("Record-level agreement per article (dashed: corpus micro)")
    ax.legend()
    return _save(fig, path)


def write_eval_report(out_dir: str | Path, report: Mapping[str, Any]) -> dict[str, Path]:
    """eval.json + per_article.csv + the agreement figure."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}

    json_path = out / "eval.json"
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, ensure_ascii=False, sort_keys=True, indent=2)
        fh.write("\n")
    paths["json"] = json_path

    csv_path = out / "per_article.csv"

    def _fmt(value) -> str:
        return "" if value is None else f"{value:.4f}"

    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["article_id", "gold_count", "candidate_count", "matched",
                         "precision", "recall", "field_accuracy"])
        for row in report.get("per_article", []):
            writer.writerow([
                row["article_id"], row["gold_count"], row["candidate_count"],
                row["matched"], _fmt(row["precision"]), _fmt(row["recall"]),
                _fmt(row.get("field_accuracy")),
            ])
    paths["csv"] = csv_path

    paths["agreement_png"] = _agreement_figure(report, out / "agreement.png")
    logger.info("evaluation report written to %s", out)
    return paths
