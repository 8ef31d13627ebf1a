"""Synthetic velocity maps by interpolating between pairs of training maps."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
import torch

from .._io import read_f32, write_f32
from ..datagen import YEARS, LeakageScenario, LeakClass
from .training import GeneratorCheckpoint

ALPHA_MODES = ("endpoints", "adjacent")
DEFAULT_ALPHAS = {
    # weighted toward year 10, where small leaks live
    "endpoints": np.linspace(0.6, 1.0, 21),
    "adjacent": np.linspace(0.1, 0.9, 9),
}
SMALL_CLASSES = (LeakClass.TINY, LeakClass.SMALL)
GENERATOR_TAGS = ("ae", "vae", "vae_percep", "vae_reg", "linear")


class LatentCodec(Protocol):
    def encode(self, maps) -> torch.Tensor: ...

    def decode(self, z: torch.Tensor) -> np.ndarray: ...


@dataclass(frozen=True)
class SyntheticSample:
    map: np.ndarray
    alpha: float
    scenario_id: int
    year_a: int
    year_b: int
    generator: str = "vae_reg"

    def __post_init__(self):
        _check_alpha(self.alpha)

    @property
    def pseudo_year(self) -> float:
        return self.alpha * self.year_a + (1.0 - self.alpha) * self.year_b


def _check_alpha(alpha: float) -> None:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")


def latent_interpolate(x_a, x_b, alpha: float, codec: LatentCodec, years: tuple[int, int] = (10, 200),
                       scenario_id: int = -1, generator: str = "vae_reg") -> SyntheticSample:
    """Decode ``alpha * z_a + (1 - alpha) * z_b`` with z the posterior mean.

    Each map is encoded on its own so the endpoints match ``decode(encode(x))``
    bit for bit.
    """
    _check_alpha(alpha)
    if np.shape(x_a) != np.shape(x_b):
        raise ValueError(f"map dims differ: {np.shape(x_a)} vs {np.shape(x_b)}")
    z = alpha * codec.encode(x_a) + (1.0 - alpha) * codec.encode(x_b)
    out = np.asarray(codec.decode(z))
    return SyntheticSample(out.reshape(np.shape(x_a)), float(alpha), scenario_id, years[0], years[1], generator)


def linear_interp_baseline(x_a, x_b, alpha: float) -> np.ndarray:
    """Pixel-space convex combination ``alpha * x_a + (1 - alpha) * x_b``."""
    _check_alpha(alpha)
    x_a, x_b = np.asarray(x_a), np.asarray(x_b)
    if x_a.shape != x_b.shape:
        raise ValueError(f"map dims differ: {x_a.shape} vs {x_b.shape}")
    return alpha * x_a + (1.0 - alpha) * x_b


@dataclass
class AugmentationSet:
    """Column-oriented store of synthetic samples."""

    maps: np.ndarray  # (N, H, W) float32
    alpha: np.ndarray
    scenario_id: np.ndarray
    year_a: np.ndarray
    year_b: np.ndarray
    generator: str
    gathers: np.ndarray | None = None  # (N, shots, receivers, nt) once simulated

    def __len__(self) -> int:
        return len(self.maps)

    def __getitem__(self, i: int) -> SyntheticSample:
        return SyntheticSample(self.maps[i], float(self.alpha[i]), int(self.scenario_id[i]),
                               int(self.year_a[i]), int(self.year_b[i]), self.generator)

    @property
    def pseudo_year(self) -> np.ndarray:
        return self.alpha * self.year_a + (1.0 - self.alpha) * self.year_b

    @classmethod
    def from_samples(cls, samples: Sequence[SyntheticSample], generator: str) -> "AugmentationSet":
        return cls(
            np.stack([s.map for s in samples]).astype(np.float32),
            np.array([s.alpha for s in samples], dtype=np.float64),
            np.array([s.scenario_id for s in samples], dtype=np.int64),
            np.array([s.year_a for s in samples], dtype=np.int64),
            np.array([s.year_b for s in samples], dtype=np.int64),
            generator,
        )

    def head(self, n: int) -> "AugmentationSet":
        g = None if self.gathers is None else self.gathers[:n]
        return AugmentationSet(self.maps[:n], self.alpha[:n], self.scenario_id[:n], self.year_a[:n],
                               self.year_b[:n], self.generator, g)

    def save(self, directory: str | Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        write_f32(directory / "synthetic_maps.f32", self.maps, {"kind": "synthetic_maps", "generator": self.generator})
        with open(directory / "samples.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "scenario_id", "year_a", "year_b", "alpha", "pseudo_year", "generator"])
            for i in range(len(self)):
                w.writerow([i, int(self.scenario_id[i]), int(self.year_a[i]), int(self.year_b[i]),
                            repr(float(self.alpha[i])), repr(float(self.pseudo_year[i])), self.generator])
        if self.gathers is not None:
            write_f32(directory / "synthetic_gathers.f32", self.gathers, {"kind": "synthetic_gathers"})
        return directory

    @classmethod
    def load(cls, directory: str | Path) -> "AugmentationSet":
        directory = Path(directory)
        maps, meta = read_f32(directory / "synthetic_maps.f32")
        with open(directory / "samples.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        gathers = None
        if (directory / "synthetic_gathers.f32").exists():
            gathers = read_f32(directory / "synthetic_gathers.f32")[0]
        return cls(
            maps,
            np.array([float(r["alpha"]) for r in rows]),
            np.array([int(r["scenario_id"]) for r in rows], dtype=np.int64),
            np.array([int(r["year_a"]) for r in rows], dtype=np.int64),
            np.array([int(r["year_b"]) for r in rows], dtype=np.int64),
            meta["generator"],
            gathers,
        )


def source_pairs(train_set: Sequence[LeakageScenario], alpha_mode: str, small_only: bool = True
                 ) -> list[tuple[int, int, int]]:
    """(scenario index, year_a, year_b) candidates for interpolation.

    Adjacent mode keeps pairs whose earlier map is a Tiny or Small leak when
    any exist.
    """
    if alpha_mode == "endpoints":
        return [(i, YEARS[0], YEARS[-1]) for i in range(len(train_set))]
    if alpha_mode != "adjacent":
        raise ValueError(f"alpha_mode must be one of {ALPHA_MODES}, got {alpha_mode!r}")
    pairs = [(i, YEARS[k], YEARS[k + 1]) for i in range(len(train_set)) for k in range(len(YEARS) - 1)]
    if small_only:
        small = [p for p in pairs if train_set[p[0]].classes[YEARS.index(p[1])] in SMALL_CLASSES]
        if small:
            return small
    return pairs


def generate_augmentation(checkpoint: GeneratorCheckpoint | str, train_set: Sequence[LeakageScenario],
                          count: int = 3000, alpha_mode: str = "adjacent", seed: int = 0,
                          alphas: Sequence[float] | None = None, small_only: bool = True) -> AugmentationSet:
    """Draw ``count`` (pair, alpha) combinations and generate one map for each.

    ``checkpoint`` may be the string ``"linear"`` for pixel-space blending.
    The autoencoder interpolates in time instead of latent space: it is
    evaluated at the pseudo-year between the pair's years.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if not train_set:
        raise ValueError("empty training set")
    grid = np.asarray(DEFAULT_ALPHAS[alpha_mode] if alphas is None else alphas, dtype=np.float64)
    for a in grid:
        _check_alpha(a)
    pairs = source_pairs(train_set, alpha_mode, small_only)
    rng = np.random.default_rng(seed)
    picks = rng.integers(len(pairs), size=count)
    chosen_alpha = grid[rng.integers(len(grid), size=count)]

    tag = "linear" if isinstance(checkpoint, str) else checkpoint.model_kind
    if isinstance(checkpoint, str) and checkpoint != "linear":
        raise ValueError(f"unknown generator {checkpoint!r}")
    latent_cache: dict[tuple[int, int], torch.Tensor] = {}

    def code(i, year):
        if (i, year) not in latent_cache:
            latent_cache[(i, year)] = checkpoint.encode(train_set[i].map_at(year))
        return latent_cache[(i, year)]

    samples = []
    for pick, alpha in zip(picks, chosen_alpha):
        i, ya, yb = pairs[pick]
        scen = train_set[i]
        if tag == "linear":
            m = linear_interp_baseline(scen.map_at(ya), scen.map_at(yb), alpha)
        elif tag == "ae":
            t = alpha * ya + (1.0 - alpha) * yb
            m = checkpoint.predict_at(scen.velocities[0], scen.velocities[-1], t)[0]
        else:
            m = checkpoint.decode(alpha * code(i, ya) + (1.0 - alpha) * code(i, yb))[0]
        samples.append(SyntheticSample(np.asarray(m, dtype=np.float32), float(alpha), scen.scenario_id, ya, yb, tag))
    return AugmentationSet.from_samples(samples, tag)
