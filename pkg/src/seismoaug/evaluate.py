"""Metrics and diagnostics for reconstructed or inverted velocity maps."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.signal import correlate2d

from .datagen import CLASS_ORDER, YEARS, LeakageScenario


def mae(a, b) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a - b)))


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim_map(a, b, data_range: float, window: int = 11, sigma: float = 1.5, k1: float = 0.01,
             k2: float = 0.03) -> np.ndarray:
    """Local SSIM over every fully contained Gaussian window."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError(f"need two equal-shape 2-D images, got {a.shape} and {b.shape}")
    if window > min(a.shape):
        raise ValueError(f"window {window} larger than image {a.shape}")
    if not data_range > 0:
        raise ValueError("data_range must be positive")
    w = gaussian_window(window, sigma)

    def filt(x):
        return correlate2d(x, w, mode="valid")

    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a * mu_a
    var_b = filt(b * b) - mu_b * mu_b
    cov = filt(a * b) - mu_a * mu_b
    c1, c2 = (k1 * data_range) ** 2, (k2 * data_range) ** 2
    return ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))


def ssim(a, b, data_range: float | None = None, window: int = 11, sigma: float = 1.5, k1: float = 0.01,
         k2: float = 0.03) -> float:
    """Mean Gaussian-windowed SSIM.  ``data_range`` defaults to the joint span of both images."""
    if data_range is None:
        lo = min(np.min(a), np.min(b))
        hi = max(np.max(a), np.max(b))
        data_range = float(hi - lo) or 1.0
    return float(np.mean(ssim_map(a, b, data_range, window, sigma, k1, k2)))


@dataclass
class YearRow:
    year: int
    mean_loss: float  # NaN when no sample carries this year
    count: int


def per_year_table(years: Sequence[int], losses: Sequence[float]) -> list[YearRow]:
    """One row per monitoring year; years without samples are left empty."""
    years = np.asarray(years)
    losses = np.asarray(losses, dtype=np.float64)
    rows = []
    for y in YEARS:
        sel = losses[years == y]
        rows.append(YearRow(y, float(sel.mean()) if len(sel) else float("nan"), int(len(sel))))
    return rows


def per_year_loss_curve(checkpoint, test_set: Sequence[LeakageScenario]) -> list[YearRow]:
    """Mean squared reconstruction error per year, in [0, 1]-scaled units.

    ``checkpoint`` needs ``predict_scenario`` and ``bounds`` (a generator
    checkpoint).
    """
    years, losses = [], []
    for scen in test_set:
        pred = checkpoint.bounds.normalize(np.asarray(checkpoint.predict_scenario(scen), dtype=np.float64))
        true = checkpoint.bounds.normalize(scen.velocities.astype(np.float64))
        losses.extend(np.mean((pred - true) ** 2, axis=(1, 2)))
        years.extend(YEARS[: len(scen.velocities)])
    return per_year_table(years, losses)


def fit_projection(maps: np.ndarray, method: str = "pca", n_components: int = 2, seed: int = 0):
    from sklearn.decomposition import NMF, PCA

    flat = np.asarray(maps, dtype=np.float64).reshape(len(maps), -1)
    if len(flat) < n_components:
        raise ValueError(f"need at least {n_components} samples, got {len(flat)}")
    if method == "pca":
        model = PCA(n_components=n_components, svd_solver="full")
    elif method == "nmf":
        if np.min(flat) < 0:
            raise ValueError("nmf needs non-negative inputs")
        model = NMF(n_components=n_components, init="nndsvda", max_iter=1000, random_state=seed)
    else:
        raise ValueError(f"method must be pca or nmf, got {method!r}")
    return model, model.fit_transform(flat)


def histogram_overlap(p: np.ndarray, q: np.ndarray, bins: int = 20) -> float:
    """Intersection of the two normalized 2-D histograms on shared bins, in [0, 1]."""
    both = np.concatenate([p, q])
    lo, hi = both.min(axis=0), both.max(axis=0)
    hi = np.where(hi > lo, hi, lo + 1.0)
    edges = [np.linspace(lo[d], hi[d], bins + 1) for d in range(2)]
    hp = np.histogram2d(p[:, 0], p[:, 1], bins=edges)[0] / len(p)
    hq = np.histogram2d(q[:, 0], q[:, 1], bins=edges)[0] / len(q)
    return float(min(1.0, np.minimum(hp, hq).sum()))


@dataclass
class Projection:
    method: str
    true_points: np.ndarray
    generated_points: np.ndarray
    overlap: float


def project_2d(true_maps, generated_maps, method: str = "pca", bins: int = 20, seed: int = 0) -> Projection:
    """Fit a 2-component projection on the union of both sets and score their overlap."""
    true_maps, generated_maps = np.asarray(true_maps), np.asarray(generated_maps)
    if len(true_maps) == 0 or len(generated_maps) == 0:
        raise ValueError("both sets need at least one map")
    _, pts = fit_projection(np.concatenate([true_maps, generated_maps]), method, 2, seed)
    p, q = pts[: len(true_maps)], pts[len(true_maps):]
    return Projection(method, p, q, histogram_overlap(p, q, bins))


def kz_spectrum(velocity, baseline) -> np.ndarray:
    """Depth-wavenumber amplitude of ``velocity - baseline``.

    Orthonormal FFT down each column, power averaged over columns, square
    root taken; all H bins returned (two-sided), so the summed squared
    spectrum equals the summed squared perturbation divided by the width.
    """
    d = np.asarray(velocity, dtype=np.float64) - np.asarray(baseline, dtype=np.float64)
    if d.ndim != 2:
        raise ValueError("expected a 2-D map")
    spectrum = np.fft.fft(d, axis=0, norm="ortho")
    return np.sqrt(np.mean(np.abs(spectrum) ** 2, axis=1))


def kz_wavenumbers(height: int, dz: float = 10.0) -> np.ndarray:
    """Cycles per metre for each spectrum bin."""
    return np.fft.fftfreq(height, d=dz)


@dataclass
class BoxStats:
    median: float
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float
    outliers: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def iqr(self) -> float:
        return self.q3 - self.q1


def boxplot_stats(values) -> BoxStats:
    """Tukey box: linear-interpolated quartiles, whiskers at the last points inside 1.5 IQR."""
    v = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if v.size == 0:
        raise ValueError("boxplot_stats needs at least one value")
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    lo_fence, hi_fence = q1 - 1.5 * (q3 - q1), q3 + 1.5 * (q3 - q1)
    inside = v[(v >= lo_fence) & (v <= hi_fence)]
    outliers = v[(v < lo_fence) | (v > hi_fence)]
    return BoxStats(float(med), float(q1), float(q3), float(inside.min()), float(inside.max()), outliers)


@dataclass
class EvalReport:
    labels: list
    leak_class: np.ndarray
    mae: np.ndarray
    ssim: np.ndarray
    per_year: list[YearRow]
    boxplots: dict[str, BoxStats]
    projections: list[Projection]
    kz_true: np.ndarray
    kz_pred: np.ndarray
    data_range: float  # SSIM dynamic range in m/s (scaled maps use 1.0)
    loss_name: str = "mae_scaled"

    def write(self, directory: str | Path, plots: bool = True) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / "metrics.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "scenario_id", "year", "leak_class", "mae", "ssim", "ssim_data_range"])
            for i, (lab, c) in enumerate(zip(self.labels, self.leak_class)):
                cls = CLASS_ORDER[c].value if c >= 0 else ""
                w.writerow([i, lab[0], lab[1], cls, repr(float(self.mae[i])), repr(float(self.ssim[i])),
                            repr(self.data_range)])
        with open(directory / "per_year.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["year", self.loss_name, "count"])
            for r in self.per_year:
                w.writerow([r.year, "" if r.count == 0 else repr(r.mean_loss), r.count])
        with open(directory / "boxplot.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["group", "median", "q1", "q3", "whisker_low", "whisker_high", "n_outliers"])
            for name, b in self.boxplots.items():
                w.writerow([name, repr(b.median), repr(b.q1), repr(b.q3), repr(b.whisker_low),
                            repr(b.whisker_high), len(b.outliers)])
        with open(directory / "kz.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin", "wavenumber", "true", "predicted"])
            k = kz_wavenumbers(len(self.kz_true))
            for i in range(len(self.kz_true)):
                w.writerow([i, repr(float(k[i])), repr(float(self.kz_true[i])), repr(float(self.kz_pred[i]))])
        with open(directory / "projections.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["method", "set", "index", "x", "y", "overlap"])
            for p in self.projections:
                for name, pts in (("true", p.true_points), ("generated", p.generated_points)):
                    for i, (x, y) in enumerate(pts):
                        w.writerow([p.method, name, i, repr(float(x)), repr(float(y)), repr(p.overlap)])
        if plots:
            from .plots import report_figures

            report_figures(self, directory)
        return directory


def evaluate_maps(true_maps: np.ndarray, pred_maps: np.ndarray, labels: Sequence[tuple[int, int]],
                  leak_class: np.ndarray, baseline: np.ndarray, bounds: tuple[float, float],
                  loss: Callable[[np.ndarray, np.ndarray], float] | None = None,
                  loss_name: str = "mae_scaled", seed: int = 0) -> EvalReport:
    """Per-sample MAE and SSIM in [0, 1]-scaled units, plus the aggregate diagnostics.

    ``bounds`` is the dataset-global (vmin, vmax) used both for scaling and as
    the SSIM dynamic range.
    """
    true_maps = np.asarray(true_maps, dtype=np.float64)
    pred_maps = np.asarray(pred_maps, dtype=np.float64)
    if true_maps.shape != pred_maps.shape or len(true_maps) == 0:
        raise ValueError("need equal, non-empty stacks of true and predicted maps")
    vmin, vmax = bounds
    scale = vmax - vmin
    t_s, p_s = (true_maps - vmin) / scale, (pred_maps - vmin) / scale
    maes = np.array([mae(a, b) for a, b in zip(t_s, p_s)])
    ssims = np.array([ssim(a, b, data_range=1.0) for a, b in zip(t_s, p_s)])
    losses = maes if loss is None else np.array([loss(a, b) for a, b in zip(t_s, p_s)])
    leak_class = np.asarray(leak_class)
    boxes = {"all": boxplot_stats(maes)}
    small = np.isin(leak_class, [0, 1])
    if small.any():
        boxes["small"] = boxplot_stats(maes[small])
    projections = [project_2d(true_maps, pred_maps, m, seed=seed) for m in ("pca", "nmf")] if len(true_maps) >= 2 else []
    kz_t = np.sqrt(np.mean([kz_spectrum(m, baseline) ** 2 for m in true_maps], axis=0))
    kz_p = np.sqrt(np.mean([kz_spectrum(m, baseline) ** 2 for m in pred_maps], axis=0))
    return EvalReport(list(labels), leak_class, maes, ssims, per_year_table([lab[1] for lab in labels], losses),
                      boxes, projections, kz_t, kz_p, float(scale), loss_name)
