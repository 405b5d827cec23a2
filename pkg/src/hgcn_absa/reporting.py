"""Render training curves, bucket accuracy, and attention heatmaps to files.

Each figure is written next to a CSV of the same series so the numbers stay
scriptable; nothing here feeds back into training or evaluation.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def training_curves(log_path: str | Path, out_dir: Path) -> list[Path]:
    records = [json.loads(line) for line in
               Path(log_path).read_text(encoding="utf-8").splitlines() if line.strip()]
    if not records:
        raise ValueError(f"{log_path}: no epoch records")
    epochs = [r["epoch"] for r in records]
    csv_path = out_dir / "training_curves.csv"
    _write_csv(csv_path, ["epoch", "loss", "accuracy", "scope_f1"],
               [[r["epoch"], r["loss"], r["accuracy"], r["scope_f1"]] for r in records])

    fig, ax_loss = plt.subplots(figsize=(7, 4.2))
    ax_loss.plot(epochs, [r["loss"] for r in records], color="tab:red", label="loss")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("loss", color="tab:red")
    ax_metric = ax_loss.twinx()
    ax_metric.plot(epochs, [r["accuracy"] for r in records],
                   color="tab:blue", label="accuracy")
    ax_metric.plot(epochs, [r["scope_f1"] for r in records],
                   color="tab:green", linestyle="--", label="scope F1")
    ax_metric.set_ylabel("accuracy / scope F1")
    ax_metric.set_ylim(0.0, 1.05)
    lines = ax_loss.get_lines() + ax_metric.get_lines()
    ax_metric.legend(lines, [ln.get_label() for ln in lines], loc="center right")
    ax_loss.set_title("training progress")
    fig.tight_layout()
    png_path = out_dir / "training_curves.png"
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    return [csv_path, png_path]


def bucket_accuracy(metrics_path: str | Path, out_dir: Path) -> list[Path]:
    metrics = json.loads(Path(metrics_path).read_text(encoding="utf-8"))
    buckets = metrics.get("by_target_count", {})
    if not buckets:
        raise ValueError(f"{metrics_path}: no by_target_count section")
    keys = sorted(buckets, key=int)
    csv_path = out_dir / "bucket_accuracy.csv"
    _write_csv(csv_path, ["targets_per_sentence", "correct", "total", "accuracy"],
               [[k, buckets[k]["correct"], buckets[k]["total"], buckets[k]["accuracy"]]
                for k in keys])

    fig, ax = plt.subplots(figsize=(5.5, 4))
    accs = [buckets[k]["accuracy"] for k in keys]
    ax.bar(keys, accs, color="tab:blue")
    for x, acc in zip(keys, accs):
        ax.text(x, acc + 0.01, f"{acc:.2f}", ha="center", fontsize=9)
    ax.set_xlabel("targets per sentence")
    ax.set_ylabel("polarity accuracy")
    ax.set_ylim(0.0, 1.1)
    ax.set_title(f"accuracy by target count (overall {metrics['accuracy']:.2f})")
    fig.tight_layout()
    png_path = out_dir / "bucket_accuracy.png"
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    return [csv_path, png_path]


def attention_heatmap(attention_path: str | Path, out_dir: Path) -> list[Path]:
    payload = json.loads(Path(attention_path).read_text(encoding="utf-8"))
    words = payload["words"]
    constituents = payload["constituents"]
    matrix = payload["matrix"]
    csv_path = out_dir / "attention.csv"
    _write_csv(csv_path, ["word"] + constituents,
               [[w] + row for w, row in zip(words, matrix)])

    fig, ax = plt.subplots(figsize=(1.2 + 0.5 * len(constituents),
                                    1.2 + 0.4 * len(words)))
    image = ax.imshow(matrix, cmap="Blues", vmin=0.0, vmax=1.0, aspect="auto")
    ax.set_xticks(range(len(constituents)), constituents, rotation=45,
                  ha="right", fontsize=8)
    ax.set_yticks(range(len(words)), words, fontsize=8)
    fig.colorbar(image, ax=ax, shrink=0.8)
    ax.set_title("constituent-token attention")
    fig.tight_layout()
    png_path = out_dir / "attention.png"
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    return [csv_path, png_path]


def write_report(out_dir: str | Path, log_path: str | Path | None = None,
                 metrics_path: str | Path | None = None,
                 attention_path: str | Path | None = None) -> list[Path]:
    if log_path is None and metrics_path is None and attention_path is None:
        raise ValueError("report needs at least one of --log/--metrics/--attention")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    if log_path is not None:
        written += training_curves(log_path, out)
    if metrics_path is not None:
        written += bucket_accuracy(metrics_path, out)
    if attention_path is not None:
        written += attention_heatmap(attention_path, out)
    return written
