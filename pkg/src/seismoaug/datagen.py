"""Procedural time-lapse CO2 leakage scenarios on a layered velocity model.

Each scenario is 20 velocity maps (years 10, 20, ..., 200).  A leak is a
low-velocity plume seeded at a well in the middle layer that grows along one
migration direction.  The plume at year k is the pointwise maximum of all
Gaussian blobs emitted up to year k, so the plume never shrinks.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._io import read_f32, write_f32

YEARS = tuple(range(10, 201, 10))
N_YEARS = len(YEARS)

# Leak-class mass edges (kg); a mass equal to an edge belongs to the upper class.
CLASS_EDGES = (9.10e6, 2.67e7, 8.05e7)
TARGET_CLASS_FRACTIONS = (0.20, 0.20, 0.20, 0.40)


class LeakClass(enum.Enum):
    TINY = "Tiny"
    SMALL = "Small"
    MEDIUM = "Medium"
    LARGE = "Large"

    def __str__(self) -> str:
        return self.value


CLASS_ORDER = (LeakClass.TINY, LeakClass.SMALL, LeakClass.MEDIUM, LeakClass.LARGE)


@dataclass(frozen=True)
class GeneratorConfig:
    """Geometry and plume statistics for the procedural generator.

    ``interfaces`` are the first rows of layer 2 and layer 3.  ``mass_per_cell``
    is the CO2 mass (kg) of one fully saturated cell; it was calibrated so that
    about 70% of scenarios start in the Tiny class and the per-map class
    fractions land near 20/20/20/40%.
    """

    height: int = 64
    width: int = 64
    velocities: tuple[float, float, float] = (1800.0, 2400.0, 3000.0)
    interfaces: tuple[int, int] = (22, 44)
    max_reduction: float = 0.15
    mass_per_cell: float = 1.0e6
    support_threshold: float = 1e-3
    log10_radius_range: tuple[float, float] = (0.2, 1.0)
    saturation_radius: float = 4.0
    growth_power_range: tuple[float, float] = (0.3, 0.6)
    anisotropy: float = 1.8
    drift: float = 0.9

    def scaled_to(self, height: int, width: int) -> "GeneratorConfig":
        """Same geology on another grid; interfaces and radii scale with height."""
        s = height / self.height
        lo, hi = self.log10_radius_range
        return replace(
            self,
            height=height,
            width=width,
            interfaces=(round(self.interfaces[0] * s), round(self.interfaces[1] * s)),
            log10_radius_range=(lo + np.log10(s), hi + np.log10(s)),
            saturation_radius=self.saturation_radius * s,
            mass_per_cell=self.mass_per_cell / s**2,
        )


@dataclass(frozen=True)
class BaselineMap:
    grid: np.ndarray  # (H, W) float32, m/s

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape


@dataclass(frozen=True)
class VelocityMap:
    grid: np.ndarray
    year: int
    scenario_id: int
    leak_mass: float

    def __post_init__(self):
        if self.year % 10 or not 10 <= self.year <= 200:
            raise ValueError(f"year must be a multiple of 10 in [10, 200], got {self.year}")
        if not np.all(self.grid > 0):
            raise ValueError("velocity map must be strictly positive")

    @property
    def leak_class(self) -> LeakClass:
        return classify_leak(self.leak_mass)


@dataclass(frozen=True)
class LeakageScenario:
    scenario_id: int
    velocities: np.ndarray  # (20, H, W) float32
    mass_trajectory: np.ndarray  # (20,) kg
    seed: int
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def maps(self) -> list[VelocityMap]:
        return [
            VelocityMap(self.velocities[k], YEARS[k], self.scenario_id, float(self.mass_trajectory[k]))
            for k in range(N_YEARS)
        ]

    def map_at(self, year: int) -> np.ndarray:
        return self.velocities[YEARS.index(year)]

    @property
    def classes(self) -> list[LeakClass]:
        return [classify_leak(m) for m in self.mass_trajectory]


def generate_baseline(config: GeneratorConfig = GeneratorConfig()) -> BaselineMap:
    """Three flat layers, velocity non-decreasing with depth."""
    v = np.asarray(config.velocities, dtype=float)
    if v.shape != (3,):
        raise ValueError("exactly three layer velocities are required")
    if np.any(v <= 0):
        raise ValueError("layer velocities must be positive")
    if np.any(np.diff(v) < 0):
        raise ValueError("velocity inversion with depth")
    i1, i2 = config.interfaces
    if not 0 < i1 < i2 < config.height:
        raise ValueError(
            f"layer interfaces {config.interfaces} must satisfy 0 < i1 < i2 < H={config.height}"
        )
    if config.width < 1:
        raise ValueError("width must be positive")
    column = np.empty(config.height, dtype=np.float32)
    column[:i1], column[i1:i2], column[i2:] = v
    grid = np.repeat(column[:, None], config.width, axis=1)
    return BaselineMap(np.ascontiguousarray(grid))


def _validate(config: GeneratorConfig) -> None:
    if not 0 <= config.max_reduction < 1:
        raise ValueError("max_reduction must be in [0, 1)")
    if config.mass_per_cell < 0:
        raise ValueError("mass_per_cell must be non-negative")


def plume_saturation(seed: int, config: GeneratorConfig) -> np.ndarray:
    """Saturation in [0, 1] for each year, shape (20, H, W), non-decreasing in year."""
    rng = np.random.default_rng(seed)
    H, W = config.height, config.width
    i1, i2 = config.interfaces
    well_row = rng.uniform(i1 + 0.35 * (i2 - i1), i2 - 2)
    well_col = rng.uniform(0.25 * W, 0.75 * W)
    # mostly upward migration, tilted left or right
    angle = rng.uniform(-np.pi / 3, np.pi / 3)
    along = np.array([-np.cos(angle), np.sin(angle)])
    across = np.array([along[1], -along[0]])
    final_radius = 10 ** rng.uniform(*config.log10_radius_range)
    growth_power = rng.uniform(*config.growth_power_range)

    rows, cols = np.meshgrid(np.arange(H, dtype=float), np.arange(W, dtype=float), indexing="ij")
    sat = np.zeros((N_YEARS, H, W))
    current = np.zeros((H, W))
    for k in range(N_YEARS):
        radius = final_radius * ((k + 1) / N_YEARS) ** growth_power
        amp = min(1.0, radius / config.saturation_radius)
        center = np.array([well_row, well_col]) + config.drift * radius * along
        dr, dc = rows - center[0], cols - center[1]
        u = dr * along[0] + dc * along[1]
        w = dr * across[0] + dc * across[1]
        blob = amp * np.exp(-0.5 * ((u / (config.anisotropy * radius)) ** 2 + (w / radius) ** 2))
        current = np.maximum(current, blob)
        sat[k] = current
    return sat


def generate_scenario(seed: int, baseline: BaselineMap, config: GeneratorConfig = GeneratorConfig(),
                      scenario_id: int | None = None) -> LeakageScenario:
    """Build one scenario; a pure function of ``(seed, baseline, config)``."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    _validate(config)
    if baseline.shape != (config.height, config.width):
        raise ValueError(f"baseline shape {baseline.shape} does not match config")
    sat = plume_saturation(seed, config)
    deficit = config.max_reduction * sat
    deficit[deficit < config.support_threshold] = 0.0
    base = baseline.grid.astype(np.float64)
    vel = (base[None] * (1.0 - deficit)).astype(np.float32)
    vel = np.minimum(vel, baseline.grid[None])
    masses = scenario_masses(vel, baseline, config)
    masses = np.maximum.accumulate(masses)
    return LeakageScenario(
        scenario_id=seed if scenario_id is None else scenario_id,
        velocities=vel,
        mass_trajectory=masses,
        seed=seed,
    )


def scenario_masses(velocities: np.ndarray, baseline: BaselineMap, config: GeneratorConfig) -> np.ndarray:
    """Leak mass per map: saturation-equivalent plume volume times mass per cell."""
    if config.max_reduction == 0:
        return np.zeros(len(velocities))
    base = baseline.grid.astype(np.float64)
    deficit = 1.0 - velocities.astype(np.float64) / base[None]
    deficit[deficit < 0] = 0.0
    return config.mass_per_cell * deficit.sum(axis=(1, 2)) / config.max_reduction


def plume_area(velocities: np.ndarray, baseline: BaselineMap, threshold: float = 1e-4) -> np.ndarray:
    """Cell count where the relative velocity deficit exceeds ``threshold``."""
    deficit = 1.0 - velocities.astype(np.float64) / baseline.grid.astype(np.float64)
    return (deficit > threshold).sum(axis=(-2, -1))


def generate_dataset(n_scenarios: int, config: GeneratorConfig = GeneratorConfig(),
                     seed: int = 0) -> tuple[BaselineMap, list[LeakageScenario]]:
    """``n_scenarios`` scenarios with ids 0..n-1 and per-scenario seeds derived from ``seed``."""
    baseline = generate_baseline(config)
    seeds = np.random.SeedSequence(seed).generate_state(n_scenarios, dtype=np.uint32)
    return baseline, [
        generate_scenario(int(s), baseline, config, scenario_id=i) for i, s in enumerate(seeds)
    ]


def classify_leak(mass: float) -> LeakClass:
    if not mass >= 0:
        raise ValueError(f"leak mass must be non-negative, got {mass}")
    for edge, cls in zip(CLASS_EDGES, CLASS_ORDER):
        if mass < edge:
            return cls
    return LeakClass.LARGE


def split_dataset(scenarios: Sequence[LeakageScenario], train_fraction: float = 0.8
                  ) -> tuple[list[LeakageScenario], list[LeakageScenario]]:
    """Split by scenario: the lowest ``round(f * n)`` ids train, the rest test."""
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must be in (0, 1)")
    if len(scenarios) < 2:
        raise ValueError("need at least two scenarios to split")
    ordered = sorted(scenarios, key=lambda s: s.scenario_id)
    n_train = min(max(int(round(train_fraction * len(ordered))), 1), len(ordered) - 1)
    return ordered[:n_train], ordered[n_train:]


@dataclass
class MassHistogram:
    edges: np.ndarray
    counts: np.ndarray
    class_fractions: dict[LeakClass, float]
    target_fractions: dict[LeakClass, float] = field(
        default_factory=lambda: dict(zip(CLASS_ORDER, TARGET_CLASS_FRACTIONS))
    )

    def rows(self) -> list[tuple[float, float, int]]:
        return [(float(lo), float(hi), int(c)) for lo, hi, c in zip(self.edges[:-1], self.edges[1:], self.counts)]

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bin_lo", "bin_hi", "count"])
            for lo, hi, c in self.rows():
                writer.writerow([repr(lo), repr(hi), c])
        return path


def class_fractions(masses: Iterable[float]) -> dict[LeakClass, float]:
    labels = [classify_leak(m) for m in masses]
    n = len(labels)
    return {c: (labels.count(c) / n if n else 0.0) for c in CLASS_ORDER}


def mass_histogram(scenarios: Sequence[LeakageScenario], bins: int = 30) -> MassHistogram:
    if bins < 1:
        raise ValueError("bins must be >= 1")
    masses = np.concatenate([s.mass_trajectory for s in scenarios]) if scenarios else np.zeros(0)
    if masses.size == 0:
        return MassHistogram(np.linspace(0.0, 1.0, bins + 1), np.zeros(bins, dtype=int),
                             {c: 0.0 for c in CLASS_ORDER})
    hi = float(masses.max()) if masses.max() > 0 else 1.0
    counts, edges = np.histogram(masses, bins=bins, range=(0.0, hi))
    return MassHistogram(edges, counts, class_fractions(masses))


def save_scenario(directory: str | Path, scenario: LeakageScenario) -> Path:
    directory = Path(directory)
    return write_f32(
        directory / f"scenario_{scenario.scenario_id:04d}.f32",
        scenario.velocities,
        {
            "kind": "scenario",
            "scenario_id": scenario.scenario_id,
            "seed": scenario.seed,
            "years": list(YEARS),
            "masses": [float(m) for m in scenario.mass_trajectory],
            **scenario.meta,
        },
    )


def load_scenario(path: str | Path) -> LeakageScenario:
    vel, meta = read_f32(path)
    if meta.get("kind") != "scenario":
        raise ValueError(f"{path} is not a scenario file")
    extra = {k: v for k, v in meta.items() if k not in {"kind", "scenario_id", "seed", "years", "masses", "shape", "dtype"}}
    return LeakageScenario(int(meta["scenario_id"]), vel, np.asarray(meta["masses"], dtype=float),
                           int(meta["seed"]), extra)


def load_scenarios(directory: str | Path) -> list[LeakageScenario]:
    return [load_scenario(p) for p in sorted(Path(directory).glob("scenario_*.f32"))]


def save_baseline(path: str | Path, baseline: BaselineMap) -> Path:
    return write_f32(path, baseline.grid, {"kind": "baseline"})


def load_baseline(path: str | Path) -> BaselineMap:
    grid, _ = read_f32(path)
    return BaselineMap(grid)


def write_dataset(directory: str | Path, baseline: BaselineMap, scenarios: Sequence[LeakageScenario],
                  bins: int = 30) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_baseline(directory / "baseline.f32", baseline)
    for s in scenarios:
        save_scenario(directory, s)
    mass_histogram(scenarios, bins).to_csv(directory / "mass_hist.csv")
    return directory
