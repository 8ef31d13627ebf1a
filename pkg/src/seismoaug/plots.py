"""Raster figures for evaluation reports and sweeps (matplotlib, Agg backend)."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evaluate import kz_wavenumbers  # noqa: E402

DPI = 100


def _save(fig, path: Path) -> Path:
    # fixed metadata keeps reruns byte-identical
    fig.savefig(path, dpi=DPI, metadata={"Software": None})
    plt.close(fig)
    return path


def report_figures(report, directory: str | Path) -> list[Path]:
    directory = Path(directory)
    out = []

    fig, ax = plt.subplots(figsize=(6, 4))
    years = [r.year for r in report.per_year]
    ax.plot(years, [r.mean_loss for r in report.per_year], "o-")
    ax.set_xlabel("year")
    ax.set_ylabel(report.loss_name)
    ax.set_title("Loss per monitoring year")
    out.append(_save(fig, directory / "per_year.png"))

    fig, ax = plt.subplots(figsize=(5, 4))
    groups = list(report.boxplots)
    data = [report.mae] + ([report.mae[np.isin(report.leak_class, [0, 1])]] if "small" in groups else [])
    ax.boxplot(data, whis=1.5)
    ax.set_xticks(range(1, len(groups) + 1), groups)
    ax.set_ylabel("MAE (scaled)")
    out.append(_save(fig, directory / "boxplot.png"))

    fig, ax = plt.subplots(figsize=(6, 4))
    n = len(report.kz_true)
    k = kz_wavenumbers(n)[: n // 2 + 1]
    ax.plot(k, report.kz_true[: n // 2 + 1], label="true")
    ax.plot(k, report.kz_pred[: n // 2 + 1], label="predicted")
    ax.set_xlabel("kz (1/m)")
    ax.set_ylabel("amplitude (m/s)")
    ax.legend()
    out.append(_save(fig, directory / "kz.png"))

    for p in report.projections:
        fig, ax = plt.subplots(figsize=(5, 5))
        ax.scatter(*p.true_points.T, s=8, label="true")
        ax.scatter(*p.generated_points.T, s=8, marker="x", label="generated")
        ax.set_title(f"{p.method.upper()} (overlap {p.overlap:.2f})")
        ax.legend()
        out.append(_save(fig, directory / f"projection_{p.method}.png"))
    return out


def sweep_figure(sizes: Sequence[int], means: Sequence[float], stds: Sequence[float], path: str | Path,
                 baseline: float | None = None) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(sizes, means, yerr=stds, fmt="o-", capsize=3, label="augmented")
    if baseline is not None:
        ax.axhline(baseline, color="gray", ls="--", label="no augmentation")
    ax.set_xlabel("synthetic maps")
    ax.set_ylabel("small-leak test MAE (scaled)")
    ax.legend()
    return _save(fig, Path(path))


def grid_figure(labels: Sequence[str], losses: Sequence[float], param: str, path: str | Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(len(labels)), losses, "o-")
    ax.set_xticks(range(len(labels)), labels)
    ax.set_xlabel(param)
    ax.set_ylabel("test reconstruction loss")
    return _save(fig, Path(path))


def history_figure(history: Sequence[dict], path: str | Path, keys: Sequence[str] = ("total",)) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    epochs = [r["epoch"] for r in history]
    for key in keys:
        ax.plot(epochs, [r.get(key, np.nan) for r in history], label=key)
    ax.set_xlabel("epoch")
    ax.set_yscale("log")
    ax.legend()
    return _save(fig, Path(path))
