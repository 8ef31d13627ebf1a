"""Experiment orchestration: configs, cached stages, runs, sweeps and grid searches.

Every stage writes into ``<cache>/<stage>-<key>/`` where the key hashes
exactly the settings the stage depends on, so sweeps and reruns reuse
datasets, simulations and trained models.  A stage directory only counts as
cached once its ``.complete`` marker exists.
"""
from __future__ import annotations

import configparser
import csv
import dataclasses
import hashlib
import json
import logging
import os
import shutil
import time
import traceback
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ._io import file_sha256, write_json
from .datagen import (GeneratorConfig, generate_dataset, load_baseline, load_scenarios, split_dataset,
                      write_dataset)
from .evaluate import evaluate_maps, per_year_loss_curve
from .featureext import LAYER_SELECTIONS
from .genmodels.augment import ALPHA_MODES, AugmentationSet, generate_augmentation
from .genmodels.networks import ArchConfig
from .genmodels.training import MODEL_KINDS, GeneratorCheckpoint, GenHyper, train_generative
from .inversion import (InversionCheckpoint, InvHyper, pairs_from_archive, pairs_from_augmentation,
                        test_inversion, train_inversion)
from .plots import grid_figure, sweep_figure
from .wavesim import SimConfig, forward_dataset, load_archive, save_archive, simulate_maps

log = logging.getLogger(__name__)

GAMMA_GRID = (1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3)
LAYER_GRID = tuple(LAYER_SELECTIONS)
SWEEP_SIZES = (350, 800, 1500, 3000, 4500, 6000, 7500)


@dataclass
class DataSection:
    n_scenarios: int = 60
    height: int = 64
    width: int = 64
    train_fraction: float = 0.8
    seed: int = 0
    data_dir: str = ""  # load an existing dataset instead of generating one


@dataclass
class SimSection:
    n_shots: int = 3
    dx: float = 10.0
    dt: float = 1.5e-3
    nt: int = 400
    peak_frequency: float = 15.0
    boundary_width: int = 20


@dataclass
class GeneratorSection:
    model_kinds: tuple[str, ...] = ("vae_reg",)
    epochs: int = 15
    batch_size: int = 32
    lr: float = 1e-4
    gamma: float = 1e2
    layers: str = "D"
    channels: tuple[int, ...] = (16, 32, 64, 128)
    latent_dim: int = 64


@dataclass
class InversionSection:
    epochs: int = 20
    batch_size: int = 24
    lr: float = 0.01
    weight_decay: float = 1e-4
    decimate: int = 4


@dataclass
class AugmentationSection:
    count: int = 300
    alpha_mode: str = "adjacent"
    small_only: bool = True


@dataclass
class ExperimentSection:
    seeds: tuple[int, ...] = (0, 1)
    output_root: str = "runs"
    cache_root: str = ""


SECTIONS = {
    "data": DataSection,
    "sim": SimSection,
    "generator": GeneratorSection,
    "inversion": InversionSection,
    "augmentation": AugmentationSection,
    "experiment": ExperimentSection,
}

PROFILES: dict[str, dict[str, dict]] = {
    # a few hundred generator steps only get a usable VAE with a larger step
    # size and smaller batches; the synthetic share matches 3000 of 16000
    "desk": {
        "generator": {"lr": 1e-3, "batch_size": 8},
        "augmentation": {"count": 180},
    },
    "paper": {
        "data": {"n_scenarios": 991, "train_fraction": 800 / 991},
        "generator": {"model_kinds": ("ae", "vae", "vae_percep", "vae_reg"), "epochs": 100},
        "inversion": {"epochs": 80},
        "augmentation": {"count": 3000},
        "experiment": {"seeds": (0, 1, 2, 3, 4)},
    },
    # minutes-scale configuration for tests and demos
    "smoke": {
        "data": {"n_scenarios": 8, "height": 32, "width": 32, "train_fraction": 0.75},
        "sim": {"n_shots": 2, "nt": 200},
        "generator": {"epochs": 2, "channels": (8, 16), "latent_dim": 16},
        "inversion": {"epochs": 2, "batch_size": 16},
        "augmentation": {"count": 20},
        "experiment": {"seeds": (0,)},
    },
}


def _parse(value: str, default):
    if isinstance(default, bool):
        return value.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(default, tuple):
        kind = type(default[0]) if default else str
        return tuple(kind(v.strip()) for v in value.split(",") if v.strip())
    return type(default)(value.strip())


def _format(value) -> str:
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def stable_hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=list).encode()).hexdigest()


@dataclass
class ExperimentConfig:
    data: DataSection = field(default_factory=DataSection)
    sim: SimSection = field(default_factory=SimSection)
    generator: GeneratorSection = field(default_factory=GeneratorSection)
    inversion: InversionSection = field(default_factory=InversionSection)
    augmentation: AugmentationSection = field(default_factory=AugmentationSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.experiment.seeds:
            raise ValueError("seed list must not be empty")
        for kind in self.generator.model_kinds:
            if kind not in MODEL_KINDS:
                raise ValueError(f"unknown model kind {kind!r}")
        if self.augmentation.alpha_mode not in ALPHA_MODES:
            raise ValueError(f"alpha_mode must be one of {ALPHA_MODES}")
        if self.augmentation.count < 0:
            raise ValueError("augmentation count must be >= 0")
        if self.data.data_dir and not Path(self.data.data_dir).is_dir():
            raise FileNotFoundError(f"data_dir {self.data.data_dir} does not exist")

    @classmethod
    def from_profile(cls, profile: str = "desk") -> "ExperimentConfig":
        if profile not in PROFILES:
            raise ValueError(f"unknown profile {profile!r}; expected one of {sorted(PROFILES)}")
        return cls(**{name: sec(**PROFILES[profile].get(name, {})) for name, sec in SECTIONS.items()})

    @classmethod
    def from_ini(cls, path: str | Path | None = None, profile: str = "desk") -> "ExperimentConfig":
        """Profile defaults overridden by the keys present in ``path``."""
        base = cls.from_profile(profile)
        if path is None:
            return base
        parser = configparser.ConfigParser()
        if not parser.read(path):
            raise FileNotFoundError(f"config file {path} not found")
        sections = {}
        for name in SECTIONS:
            current = getattr(base, name)
            values = dataclasses.asdict(current)
            if parser.has_section(name):
                for key, raw in parser.items(name):
                    if key not in values:
                        raise ValueError(f"unknown key {key!r} in section [{name}]")
                    values[key] = _parse(raw, getattr(current, key))
            sections[name] = type(current)(**values)
        unknown = set(parser.sections()) - set(SECTIONS)
        if unknown:
            raise ValueError(f"unknown config section(s) {sorted(unknown)}")
        return cls(**sections)

    def to_ini(self, path: str | Path) -> Path:
        parser = configparser.ConfigParser()
        for name in SECTIONS:
            parser[name] = {k: _format(v) for k, v in dataclasses.asdict(getattr(self, name)).items()}
        with open(path, "w") as fh:
            parser.write(fh)
        return Path(path)

    def to_dict(self) -> dict:
        return {name: dataclasses.asdict(getattr(self, name)) for name in SECTIONS}

    def config_hash(self) -> str:
        d = self.to_dict()
        d["experiment"] = {"seeds": d["experiment"]["seeds"]}
        return stable_hash(d)

    def with_changes(self, section: str, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **{section: dataclasses.replace(getattr(self, section), **changes)})

    @property
    def seeds(self) -> tuple[int, ...]:
        return self.experiment.seeds

    @property
    def cache_root(self) -> Path:
        env = os.environ.get("SEISMO_CACHE")
        if env:
            return Path(env)
        if self.experiment.cache_root:
            return Path(self.experiment.cache_root)
        return Path(self.experiment.output_root) / "cache"

    def sim_config(self) -> SimConfig:
        s = self.sim
        return SimConfig.surface_acquisition(
            self.data.height, self.data.width, s.n_shots, dx=s.dx, dt=s.dt, nt=s.nt,
            peak_frequency=s.peak_frequency, boundary_width=s.boundary_width,
        )

    def gen_hyper(self, seed: int, **changes) -> GenHyper:
        g = self.generator
        arch = ArchConfig(self.data.height, self.data.width, g.channels, g.latent_dim)
        hyper = GenHyper(g.epochs, g.batch_size, g.lr, g.gamma, g.layers, seed, arch)
        return dataclasses.replace(hyper, **changes)

    def inv_hyper(self, seed: int) -> InvHyper:
        i = self.inversion
        return InvHyper(i.epochs, i.batch_size, i.lr, i.weight_decay, seed)


class StageCache:
    def __init__(self, root: str | Path):
        self.root = Path(root)

    def path(self, stage: str, key: str) -> Path:
        return self.root / f"{stage}-{key[:16]}"

    def get_or_build(self, stage: str, key_obj, build: Callable[[Path], None]) -> tuple[Path, bool]:
        """Return (directory, was_cached); ``build`` fills a fresh directory."""
        key = stable_hash(key_obj)
        final = self.path(stage, key)
        if (final / ".complete").exists():
            return final, True
        tmp = final.with_name(final.name + f".tmp{os.getpid()}")
        shutil.rmtree(tmp, ignore_errors=True)
        tmp.mkdir(parents=True)
        build(tmp)
        (tmp / ".key.json").write_text(json.dumps(key_obj, sort_keys=True, indent=1, default=list) + "\n")
        (tmp / ".complete").write_text(key + "\n")
        shutil.rmtree(final, ignore_errors=True)
        os.replace(tmp, final)
        return final, False


class StageFailed(RuntimeError):
    pass


@dataclass
class Manifest:
    """Per-run record of stages, wall times and artifact checksums."""

    config_hash: str
    seeds: tuple[int, ...]
    stages: list[dict] = field(default_factory=list)
    failed: bool = False
    outputs: dict[str, str] = field(default_factory=dict)  # run-directory files -> sha256

    def run(self, name: str, fn: Callable, *args, **kwargs):
        if self.failed:
            self.stages.append({"name": name, "status": "skipped"})
            return None
        start = time.perf_counter()
        try:
            result = fn(*args, **kwargs)
        except Exception as exc:  # recorded, downstream stages are skipped
            self.failed = True
            self.stages.append({"name": name, "status": "failed", "error": f"{type(exc).__name__}: {exc}",
                                "traceback": traceback.format_exc(), "wall_time": time.perf_counter() - start})
            log.error("stage %s failed: %s", name, exc)
            return None
        entry = {"name": name, "status": "ok", "wall_time": time.perf_counter() - start}
        if isinstance(result, tuple) and len(result) == 2 and isinstance(result[0], Path):
            directory, cached = result
            entry.update(directory=str(directory), cached=cached, artifacts=artifact_checksums(directory))
        self.stages.append(entry)
        return result

    def to_dict(self) -> dict:
        stable = [{k: v for k, v in s.items() if k not in ("wall_time", "cached", "directory", "traceback")}
                  for s in self.stages]
        # config.ini names the output and cache roots; config_hash covers the rest
        location_free = {k: v for k, v in self.outputs.items() if k != "config.ini"}
        return {
            "config_hash": self.config_hash,
            "seeds": list(self.seeds),
            "status": "failed" if self.failed else "ok",
            "manifest_hash": stable_hash({"config_hash": self.config_hash, "seeds": list(self.seeds),
                                          "stages": stable, "outputs": location_free}),
            "stages": self.stages,
            "outputs": self.outputs,
        }

    def write(self, path: str | Path) -> Path:
        return write_json(path, self.to_dict())


def artifact_checksums(directory: Path) -> dict[str, str]:
    return {
        str(p.relative_to(directory)): file_sha256(p)
        for p in sorted(directory.rglob("*"))
        if p.is_file() and not p.name.startswith(".")
    }


# stage builders ---------------------------------------------------------------


def data_stage(cfg: ExperimentConfig, cache: StageCache):
    if cfg.data.data_dir:
        return Path(cfg.data.data_dir), True
    d = cfg.data
    key = {"stage": "data", "n": d.n_scenarios, "h": d.height, "w": d.width, "seed": d.seed}

    def build(out: Path):
        baseline, scenarios = generate_dataset(d.n_scenarios, GeneratorConfig().scaled_to(d.height, d.width), d.seed)
        write_dataset(out, baseline, scenarios)

    return cache.get_or_build("data", key, build)


def sim_stage(cfg: ExperimentConfig, cache: StageCache, data_dir: Path):
    key = {"stage": "sim", "data": str(data_dir.resolve()) if cfg.data.data_dir else data_dir.name,
           "sim": dataclasses.asdict(cfg.sim)}

    def build(out: Path):
        save_archive(out, forward_dataset(load_scenarios(data_dir), cfg.sim_config()))

    return cache.get_or_build("sim", key, build)


def generator_stage(cfg: ExperimentConfig, cache: StageCache, data_dir: Path, kind: str, seed: int,
                    **hyper_changes):
    hyper = cfg.gen_hyper(seed, **hyper_changes)
    key = {"stage": "gen", "data": data_dir.name, "kind": kind, "hyper": hyper.to_dict(),
           "train_fraction": cfg.data.train_fraction}

    def build(out: Path):
        train, _ = split_dataset(load_scenarios(data_dir), cfg.data.train_fraction)
        train_generative(kind, train, hyper).save(out)

    return cache.get_or_build("gen", key, build)


def augment_stage(cfg: ExperimentConfig, cache: StageCache, data_dir: Path, gen_dir: Path, seed: int,
                  count: int | None = None):
    a = cfg.augmentation
    count = a.count if count is None else count
    key = {"stage": "aug", "gen": gen_dir.name, "count": count, "alpha_mode": a.alpha_mode,
           "small_only": a.small_only, "seed": seed, "sim": dataclasses.asdict(cfg.sim)}

    def build(out: Path):
        train, _ = split_dataset(load_scenarios(data_dir), cfg.data.train_fraction)
        ckpt = GeneratorCheckpoint.load(gen_dir)
        aug = generate_augmentation(ckpt, train, count, a.alpha_mode, seed, small_only=a.small_only)
        aug.gathers = simulate_maps(aug.maps, cfg.sim_config())
        aug.save(out)

    return cache.get_or_build("aug", key, build)


def inversion_stage(cfg: ExperimentConfig, cache: StageCache, data_dir: Path, sim_dir: Path, seed: int,
                    aug_dir: Path | None = None, size: int | None = None, aug_tag: str | None = None):
    key = {"stage": "inv", "sim": sim_dir.name, "aug": aug_dir.name if aug_dir else None, "size": size,
           "tag": aug_tag, "inversion": dataclasses.asdict(cfg.inversion), "seed": seed,
           "train_fraction": cfg.data.train_fraction}

    def build(out: Path):
        train, _ = split_dataset(load_scenarios(data_dir), cfg.data.train_fraction)
        real = pairs_from_archive(train, load_archive(sim_dir))
        synthetic = None
        if aug_dir is not None:
            aug = AugmentationSet.load(aug_dir)
            synthetic = pairs_from_augmentation(aug.head(size) if size is not None else aug)
        ckpt = train_inversion(real, synthetic, cfg.inv_hyper(seed), cfg.inversion.decimate, aug_tag)
        ckpt.save(out)

    return cache.get_or_build("inv", key, build)


def _test_pairs(cfg: ExperimentConfig, data_dir: Path, sim_dir: Path):
    _, test = split_dataset(load_scenarios(data_dir), cfg.data.train_fraction)
    return pairs_from_archive(test, load_archive(sim_dir))


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return path


@dataclass
class RunResult:
    directory: Path
    manifest: Manifest
    losses: list[dict] = field(default_factory=list)  # one row per (seed, model, subset)

    @property
    def ok(self) -> bool:
        return not self.manifest.failed

    def mean_loss(self, model: str, subset: str) -> float:
        vals = [r["loss"] for r in self.losses if r["model"] == model and r["subset"] == subset]
        return float(np.mean(vals)) if vals else float("nan")


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None, evaluate: bool = True) -> RunResult:
    """Data, gathers, generators, augmentation, baseline and augmented inversion, evaluation.

    Writes ``config.ini``, ``runs.csv`` (one row per seed, model and subset),
    ``comparison.csv`` (subset rows x model columns, seed-averaged) and
    ``manifest.json`` into the run directory.
    """
    out = Path(out_dir) if out_dir else Path(cfg.experiment.output_root) / f"run-{cfg.config_hash()[:12]}"
    out.mkdir(parents=True, exist_ok=True)
    cfg.to_ini(out / "config.ini")
    cache = StageCache(cfg.cache_root)
    manifest = Manifest(cfg.config_hash(), cfg.seeds)
    result = RunResult(out, manifest)

    data = manifest.run("data", data_stage, cfg, cache)
    sim = manifest.run("simulate", sim_stage, cfg, cache, data[0]) if data else None
    gens = {}
    for kind in cfg.generator.model_kinds:
        if cfg.augmentation.count > 0:
            g = manifest.run(f"train-gen:{kind}", generator_stage, cfg, cache, data[0] if data else None,
                             kind, cfg.seeds[0])
            gens[kind] = g[0] if g else None

    ckpts: dict[tuple[int, str], Path] = {}
    for seed in cfg.seeds:
        base = manifest.run(f"train-inv:baseline:{seed}", inversion_stage, cfg, cache,
                            data and data[0], sim and sim[0], seed)
        if base:
            ckpts[(seed, "baseline")] = base[0]
        for kind in cfg.generator.model_kinds:
            aug_dir = None
            if cfg.augmentation.count > 0:
                aug = manifest.run(f"augment:{kind}:{seed}", augment_stage, cfg, cache, data and data[0],
                                   gens.get(kind), seed)
                aug_dir = aug and aug[0]
            inv = manifest.run(f"train-inv:{kind}:{seed}", inversion_stage, cfg, cache, data and data[0],
                               sim and sim[0], seed, aug_dir, None, kind)
            if inv:
                ckpts[(seed, kind)] = inv[0]

    if not manifest.failed:
        manifest.run("evaluate", _evaluate_run, cfg, data[0], sim[0], ckpts, out, result, evaluate)
    manifest.outputs = {k: v for k, v in artifact_checksums(out).items() if k != "manifest.json"}
    manifest.write(out / "manifest.json")
    return result


def _evaluate_run(cfg, data_dir, sim_dir, ckpts, out: Path, result: RunResult, full_report: bool):
    test = _test_pairs(cfg, data_dir, sim_dir)
    models = ["baseline"] + list(cfg.generator.model_kinds)
    for seed in cfg.seeds:
        for model in models:
            ckpt = InversionCheckpoint.load(ckpts[(seed, model)])
            for subset in ("general", "small"):
                try:
                    rep = test_inversion(ckpt, test, subset)
                except ValueError:
                    continue
                result.losses.append({"seed": seed, "model": model, "subset": subset, "loss": rep.loss,
                                      "n": len(rep.per_sample)})
    _write_csv(out / "runs.csv", ["seed", "model", "subset", "loss", "n_samples"],
               [[r["seed"], r["model"], r["subset"], r["loss"], r["n"]] for r in result.losses])
    rows = []
    for subset, label in (("general", "General"), ("small", "Small leakage")):
        rows.append([label] + [result.mean_loss(m, subset) for m in models])
    _write_csv(out / "comparison.csv", ["test_set"] + models, rows)
    if full_report:
        baseline = load_baseline(data_dir / "baseline.f32").grid
        for model in models:
            ckpt = InversionCheckpoint.load(ckpts[(cfg.seeds[0], model)])
            pred = ckpt.predict(test.gathers)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                report = evaluate_maps(test.targets, pred, test.labels, test.leak_class, baseline,
                                       (ckpt.norm.vmin, ckpt.norm.vmax))
            report.write(out / "eval" / model)


# sweep and grid search --------------------------------------------------------


@dataclass
class SweepResult:
    directory: Path
    runs: list[dict]  # size, seed, small_loss, general_loss
    summary: list[dict]  # size, mean, std, n_runs
    baseline: dict[int, float]


def _seed_groups(cfg: ExperimentConfig, n: int | None) -> tuple[int, ...]:
    if n is None:
        return cfg.seeds
    seeds = list(cfg.seeds[:n])
    nxt = max(cfg.seeds) + 1
    while len(seeds) < n:
        seeds.append(nxt)
        nxt += 1
    return tuple(seeds)


def summarize_sweep(runs: Sequence[dict]) -> list[dict]:
    """Mean and population std of the small-leak loss per size, ascending by size."""
    out = []
    for size in sorted({r["size"] for r in runs}):
        vals = np.array([r["small_loss"] for r in runs if r["size"] == size], dtype=np.float64)
        out.append({"size": size, "mean": float(vals.mean()), "std": float(vals.std(ddof=0)), "n_runs": len(vals)})
    return out


def sweep_size(cfg: ExperimentConfig, sizes: Sequence[int] = SWEEP_SIZES, seed_groups: int | None = None,
               out_dir: str | Path | None = None, model_kind: str | None = None) -> SweepResult:
    """Small-leak test loss against augmentation size, one inversion net per (size, seed group).

    Each seed group draws one augmentation set of ``max(sizes)`` maps; smaller
    sizes train on its leading samples.
    """
    sizes = sorted(int(s) for s in sizes)
    if not sizes or sizes[0] < 1:
        raise ValueError("sizes must be a non-empty list of positive counts")
    kind = model_kind or cfg.generator.model_kinds[0]
    seeds = _seed_groups(cfg, seed_groups)
    out = Path(out_dir) if out_dir else Path(cfg.experiment.output_root) / f"sweep-{cfg.config_hash()[:12]}"
    out.mkdir(parents=True, exist_ok=True)
    cache = StageCache(cfg.cache_root)
    data_dir, _ = data_stage(cfg, cache)
    sim_dir, _ = sim_stage(cfg, cache, data_dir)
    gen_dir, _ = generator_stage(cfg, cache, data_dir, kind, cfg.seeds[0])
    test = _test_pairs(cfg, data_dir, sim_dir)
    runs, baseline = [], {}
    for seed in seeds:
        base_dir, _ = inversion_stage(cfg, cache, data_dir, sim_dir, seed)
        baseline[seed] = test_inversion(InversionCheckpoint.load(base_dir), test, "small").loss
        aug_dir, _ = augment_stage(cfg, cache, data_dir, gen_dir, seed, count=sizes[-1])
        for size in sizes:
            inv_dir, _ = inversion_stage(cfg, cache, data_dir, sim_dir, seed, aug_dir, size, kind)
            ckpt = InversionCheckpoint.load(inv_dir)
            runs.append({"size": size, "seed": seed, "small_loss": test_inversion(ckpt, test, "small").loss,
                         "general_loss": test_inversion(ckpt, test, "general").loss})
    summary = summarize_sweep(runs)
    _write_csv(out / "sweep_runs.csv", ["size", "seed", "small_loss", "general_loss"],
               [[r["size"], r["seed"], r["small_loss"], r["general_loss"]] for r in runs])
    _write_csv(out / "sweep_summary.csv", ["size", "mean_small_loss", "std_small_loss", "n_runs"],
               [[s["size"], s["mean"], s["std"], s["n_runs"]] for s in summary])
    _write_csv(out / "sweep_baseline.csv", ["seed", "small_loss"], [[s, v] for s, v in baseline.items()])
    sweep_figure([s["size"] for s in summary], [s["mean"] for s in summary], [s["std"] for s in summary],
                 out / "sweep.png", float(np.mean(list(baseline.values()))))
    return SweepResult(out, runs, summary, baseline)


@dataclass
class GridResult:
    directory: Path
    param: str
    rows: list[dict]  # value, model_kind, test_loss, n_maps

    @property
    def best(self) -> dict:
        return min(self.rows, key=lambda r: r["test_loss"])


def generator_test_loss(ckpt: GeneratorCheckpoint, test_set) -> tuple[float, int]:
    """Mean squared reconstruction error over all test maps, [0, 1]-scaled units."""
    rows = per_year_loss_curve(ckpt, test_set)
    n = sum(r.count for r in rows)
    return float(sum(r.mean_loss * r.count for r in rows if r.count) / n), n


def grid_search(cfg: ExperimentConfig, param: str, values: Sequence | None = None,
                out_dir: str | Path | None = None) -> GridResult:
    """Train one generator per grid value and score it on the test scenarios.

    ``layers`` tunes the perception-loss VAE, ``gamma`` the regularized VAE.
    """
    if param == "layers":
        kind, values = "vae_percep", tuple(values or LAYER_GRID)
    elif param == "gamma":
        kind, values = "vae_reg", tuple(float(v) for v in (values or GAMMA_GRID))
    else:
        raise ValueError(f"param must be 'layers' or 'gamma', got {param!r}")
    out = Path(out_dir) if out_dir else Path(cfg.experiment.output_root) / f"grid-{param}-{cfg.config_hash()[:12]}"
    out.mkdir(parents=True, exist_ok=True)
    cache = StageCache(cfg.cache_root)
    data_dir, _ = data_stage(cfg, cache)
    _, test = split_dataset(load_scenarios(data_dir), cfg.data.train_fraction)
    rows = []
    for value in values:
        gen_dir, _ = generator_stage(cfg, cache, data_dir, kind, cfg.seeds[0], **{param: value})
        loss, n = generator_test_loss(GeneratorCheckpoint.load(gen_dir), test)
        rows.append({"value": value, "model_kind": kind, "test_loss": loss, "n_maps": n})
    _write_csv(out / "grid_search.csv", ["param", "value", "model_kind", "test_loss", "n_test_maps"],
               [[param, r["value"], r["model_kind"], r["test_loss"], r["n_maps"]] for r in rows])
    grid_figure([str(r["value"]) for r in rows], [r["test_loss"] for r in rows], param, out / "grid_search.png")
    return GridResult(out, param, rows)
