"""Stage reports: key=value text, JSON metrics, matplotlib figures."""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def write_report(out_dir: str | Path, metrics: dict, name: str = "report") -> None:
    """report.txt with sorted key=value lines plus metrics.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = [f"{k}={_fmt(v)}" for k, v in sorted(metrics.items())]
    (out / f"{name}.txt").write_text("".join(l + "\n" for l in lines), encoding="utf-8")
    (out / "metrics.json").write_text(
        json.dumps(metrics, sort_keys=True, indent=1, default=float) + "\n", encoding="utf-8"
    )


def save_curves(path: str | Path, curves: dict[str, list[float]], title: str, xlabel: str = "step") -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, ys in sorted(curves.items()):
        if len(ys) > 1:
            ax.plot(range(len(ys)), ys, label=name, linewidth=1)
    ax.set_xlabel(xlabel)
    ax.set_title(title)
    if ax.lines:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_scatter(
    path: str | Path, xs: list[float], ys: list[float], labels: list[str] | None,
    xlabel: str, ylabel: str, title: str,
) -> None:
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.scatter(xs, ys)
    if labels:
        for x, y, lab in zip(xs, ys, labels):
            ax.annotate(lab, (x, y), fontsize=8, xytext=(3, 3), textcoords="offset points")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_bars(path: str | Path, names: list[str], values: list[float], ylabel: str, title: str) -> None:
    fig, ax = plt.subplots(figsize=(max(4, 0.9 * len(names)), 4))
    ax.bar(range(len(names)), values)
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
