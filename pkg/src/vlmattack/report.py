"""Rendering of metrics reports: text table, JSON, CSV, and figures.

The report path always writes the delimited/JSON forms; figures are
rendered to PNG files alongside them (success/rejection bars per target
and condition, plus loss-trace curves when attack sidecars are supplied).
"""

from __future__ import annotations

import csv
import io
import json
import os
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .harness import MetricsReport, format_rate
from .image import atomic_write_bytes, atomic_write_text

COLUMNS = ("Target", "Condition", "N", "Attack Success Rate", "Rejection Rate")


def render_text_table(report: MetricsReport) -> str:
    rows = [
        (
            g.target_id,
            g.condition,
            str(g.n),
            format_rate(g.success_rate),
            format_rate(g.rejection_rate),
        )
        for g in report.groups
    ]
    widths = [
        max(len(COLUMNS[i]), *(len(r[i]) for r in rows)) if rows else len(COLUMNS[i])
        for i in range(len(COLUMNS))
    ]
    lines = [
        " | ".join(COLUMNS[i].ljust(widths[i]) for i in range(len(COLUMNS))),
        "-+-".join("-" * w for w in widths),
    ]
    for r in rows:
        lines.append(" | ".join(r[i].ljust(widths[i]) for i in range(len(COLUMNS))))
    return "\n".join(lines) + "\n"


def report_to_dict(report: MetricsReport) -> dict:
    return {
        "groups": [
            {
                "target_id": g.target_id,
                "condition": g.condition,
                "n": g.n,
                "successes": g.successes,
                "rejections": g.rejections,
                "success_rate": {
                    "numerator": g.success_rate.numerator,
                    "denominator": g.success_rate.denominator,
                    "percent": format_rate(g.success_rate),
                },
                "rejection_rate": {
                    "numerator": g.rejection_rate.numerator,
                    "denominator": g.rejection_rate.denominator,
                    "percent": format_rate(g.rejection_rate),
                },
            }
            for g in report.groups
        ]
    }


def render_csv(report: MetricsReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["target_id", "condition", "n", "successes", "rejections",
                     "success_rate", "rejection_rate"])
    for g in report.groups:
        writer.writerow([
            g.target_id, g.condition, g.n, g.successes, g.rejections,
            format_rate(g.success_rate), format_rate(g.rejection_rate),
        ])
    return buf.getvalue()


def plot_success_rates(report: MetricsReport, path) -> None:
    groups = report.groups
    labels = [f"{g.target_id}\n{g.condition}" for g in groups]
    success = [float(g.success_rate) * 100 for g in groups]
    rejection = [float(g.rejection_rate) * 100 for g in groups]
    x = range(len(groups))
    width = 0.38
    fig, ax = plt.subplots(figsize=(max(4.0, 1.6 * len(groups) + 1.5), 3.6))
    ax.bar([i - width / 2 for i in x], success, width, label="success", color="#c0392b")
    ax.bar([i + width / 2 for i in x], rejection, width, label="rejection", color="#7f8c8d")
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels, fontsize=7)
    ax.set_ylabel("rate (%)")
    ax.set_ylim(0, 100)
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save_figure(fig, path)


def plot_loss_traces(sidecar_paths, path) -> None:
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    for sc in sidecar_paths:
        with open(sc, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        trace = doc.get("loss_trace") or []
        ax.plot(range(len(trace)), trace, linewidth=0.9, alpha=0.8,
                label=str(doc.get("id", Path(sc).stem)))
    ax.set_xlabel("iteration")
    ax.set_ylabel("objective value")
    if len(list(sidecar_paths)) <= 10:
        ax.legend(fontsize=7)
    fig.tight_layout()
    _save_figure(fig, path)


def _save_figure(fig, path) -> None:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=120)
    plt.close(fig)
    atomic_write_bytes(path, buf.getvalue())


def write_report_files(report: MetricsReport, out_dir, sidecar_paths=None) -> dict:
    """Write table.txt, report.json, report.csv, and the figures."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "table": out / "table.txt",
        "json": out / "report.json",
        "csv": out / "report.csv",
        "success_figure": out / "figures" / "success_rates.png",
    }
    atomic_write_text(paths["table"], render_text_table(report))
    atomic_write_text(paths["json"], json.dumps(report_to_dict(report), indent=2, sort_keys=True))
    atomic_write_text(paths["csv"], render_csv(report))
    plot_success_rates(report, paths["success_figure"])
    if sidecar_paths:
        paths["trace_figure"] = out / "figures" / "loss_traces.png"
        plot_loss_traces(list(sidecar_paths), paths["trace_figure"])
    return {k: os.fspath(v) for k, v in paths.items()}
