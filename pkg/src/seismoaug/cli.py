"""``seismoaug`` command line."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import shutil
import sys
import warnings
from pathlib import Path

import numpy as np

log = logging.getLogger("seismoaug")

MODEL_ALIASES = {"ae": "ae", "vae": "vae", "vae-percep": "vae_percep", "vae-reg": "vae_reg"}


def _split(directory: Path, which: str, fraction: float):
    from .datagen import load_scenarios, split_dataset

    scenarios = load_scenarios(directory)
    if not scenarios:
        raise SystemExit(f"no scenario_*.f32 files in {directory}")
    if which == "all":
        return scenarios
    train, test = split_dataset(scenarios, fraction)
    return train if which == "train" else test


def cmd_gen_data(args) -> int:
    from .datagen import GeneratorConfig, generate_dataset, write_dataset

    cfg = GeneratorConfig().scaled_to(*args.grid)
    if args.max_reduction is not None:
        from dataclasses import replace

        cfg = replace(cfg, max_reduction=args.max_reduction)
    baseline, scenarios = generate_dataset(args.scenarios, cfg, args.seed)
    write_dataset(args.out, baseline, scenarios, bins=args.bins)
    print(f"wrote {len(scenarios)} scenarios to {args.out}")
    return 0


def cmd_simulate(args) -> int:
    from .datagen import load_scenarios
    from .wavesim import SimConfig, SimulationError, forward_dataset, save_archive

    scenarios = load_scenarios(args.data)
    if not scenarios:
        raise SystemExit(f"no scenario_*.f32 files in {args.data}")
    h, w = scenarios[0].velocities.shape[1:]
    cfg = SimConfig.surface_acquisition(h, w, args.shots, dx=args.dx, dt=args.dt, nt=args.nt,
                                        peak_frequency=args.freq, boundary_width=args.boundary)
    try:
        archive = forward_dataset(scenarios, cfg)
    except SimulationError as exc:
        print(f"simulation failed: {exc} (scenario={exc.scenario_id}, year={exc.year}, shot={exc.shot})",
              file=sys.stderr)
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    # copy the maps so the directory holds complete (gather, map) pairs
    for pattern in ("scenario_*", "baseline.*"):
        for p in sorted(Path(args.data).glob(pattern)):
            shutil.copyfile(p, out / p.name)
    save_archive(out, archive)
    print(f"simulated {len(archive)} gathers into {out}")
    return 0


def cmd_train_gen(args) -> int:
    from .genmodels.networks import ArchConfig
    from .genmodels.training import GenHyper, train_generative

    train = _split(Path(args.data), args.split, args.train_fraction)
    h, w = train[0].velocities.shape[1:]
    arch = ArchConfig(h, w, tuple(args.channels), args.latent)
    hyper = GenHyper(args.epochs, args.batch, args.lr, args.gamma, args.layers, args.seed, arch)
    ckpt = train_generative(MODEL_ALIASES[args.model], train, hyper)
    ckpt.save(args.out)
    print(f"final loss {ckpt.history[-1]['total']:.6g}; checkpoint in {args.out}")
    return 0


def cmd_augment(args) -> int:
    from .genmodels.augment import generate_augmentation
    from .genmodels.training import GeneratorCheckpoint
    from .wavesim import load_archive, simulate_maps

    train = _split(Path(args.data), args.split, args.train_fraction)
    ckpt = "linear" if args.ckpt == "linear" else GeneratorCheckpoint.load(args.ckpt)
    aug = generate_augmentation(ckpt, train, args.count, args.alpha_mode, args.seed)
    if args.simulate:
        aug.gathers = simulate_maps(aug.maps, load_archive(args.data).config)
    aug.save(args.out)
    print(f"wrote {len(aug)} synthetic maps to {args.out}")
    return 0


def cmd_train_inv(args) -> int:
    from .genmodels.augment import AugmentationSet
    from .inversion import InvHyper, pairs_from_archive, pairs_from_augmentation, train_inversion
    from .wavesim import load_archive

    train = _split(Path(args.train), args.split, args.train_fraction)
    real = pairs_from_archive(train, load_archive(args.train))
    synthetic = None
    if args.aug:
        aug = AugmentationSet.load(args.aug)
        if args.aug_count is not None:
            aug = aug.head(args.aug_count)
        synthetic = pairs_from_augmentation(aug)
    hyper = InvHyper(args.epochs, args.batch, args.lr, args.wd, args.seed)
    ckpt = train_inversion(real, synthetic, hyper, args.decimate)
    ckpt.save(args.out)
    print(f"final train loss {ckpt.history[-1]['train_loss']:.6g}; checkpoint in {args.out}")
    return 0


def cmd_test_inv(args) -> int:
    from .datagen import CLASS_ORDER
    from .inversion import InversionCheckpoint, pairs_from_archive, test_inversion
    from .wavesim import load_archive

    test = _split(Path(args.test), args.split, args.train_fraction)
    pairs = pairs_from_archive(test, load_archive(args.test))
    report = test_inversion(InversionCheckpoint.load(args.ckpt), pairs, args.subset)
    if args.report:
        with open(args.report, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "scenario_id", "year", "leak_class", "mae"])
            for i, (lab, c, e) in enumerate(zip(report.labels, report.leak_class, report.per_sample)):
                w.writerow([i, lab[0], lab[1], CLASS_ORDER[c].value, repr(float(e))])
    print(f"{args.subset} loss {report.loss!r} over {len(report.per_sample)} maps")
    return 0


def cmd_eval(args) -> int:
    from .datagen import CLASS_ORDER, load_baseline
    from .evaluate import evaluate_maps
    from .genmodels.training import GeneratorCheckpoint
    from .inversion import InversionCheckpoint, pairs_from_archive
    from .wavesim import load_archive

    kind = json.loads((Path(args.ckpt) / "header.json").read_text()).get("kind")
    test = _split(Path(args.test), args.split, args.train_fraction)
    baseline = load_baseline(args.baseline).grid
    labels = [(s.scenario_id, y) for s in test for y in range(10, 10 * (len(s.velocities) + 1), 10)]
    classes = np.array([CLASS_ORDER.index(c) for s in test for c in s.classes])
    truth = np.concatenate([s.velocities for s in test])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if kind == "inversion":
            ckpt = InversionCheckpoint.load(args.ckpt)
            pred = ckpt.predict(pairs_from_archive(test, load_archive(args.test)).gathers)
            report = evaluate_maps(truth, pred, labels, classes, baseline, (ckpt.norm.vmin, ckpt.norm.vmax))
        else:
            ckpt = GeneratorCheckpoint.load(args.ckpt)
            pred = np.concatenate([ckpt.predict_scenario(s) for s in test])
            bounds = (ckpt.bounds.vmin, ckpt.bounds.vmax)
            report = evaluate_maps(truth, pred, labels, classes, baseline, bounds,
                                   loss=lambda a, b: float(np.mean((a - b) ** 2)), loss_name="mse_scaled")
    report.write(args.out)
    print(f"mean MAE {report.mae.mean():.6g}, mean SSIM {report.ssim.mean():.6g}; report in {args.out}")
    return 0


def _config(args):
    from .pipeline import ExperimentConfig

    cfg = ExperimentConfig.from_ini(args.config, args.profile)
    if args.output_root:
        cfg = cfg.with_changes("experiment", output_root=args.output_root)
    return cfg


def cmd_run(args) -> int:
    from .pipeline import run_experiment

    result = run_experiment(_config(args), args.out)
    if result.ok:
        print((result.directory / "comparison.csv").read_text(), end="")
    print(f"run directory {result.directory} ({'ok' if result.ok else 'FAILED, see manifest.json'})")
    return 0 if result.ok else 1


def cmd_sweep_size(args) -> int:
    from .pipeline import sweep_size

    sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    res = sweep_size(_config(args), sizes, args.seed_groups, args.out)
    print((res.directory / "sweep_summary.csv").read_text(), end="")
    return 0


def cmd_grid_search(args) -> int:
    from .pipeline import grid_search

    values = [v.strip() for v in args.values.split(",")] if args.values else None
    res = grid_search(_config(args), args.param, values, args.out)
    print((res.directory / "grid_search.csv").read_text(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="seismoaug", description="Generative augmentation for learned seismic inversion.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def split_opts(sp, default):
        sp.add_argument("--split", choices=("train", "test", "all"), default=default,
                        help="which scenarios of the directory to use (lowest ids train)")
        sp.add_argument("--train-fraction", type=float, default=0.8)

    s = sub.add_parser("gen-data", help="generate leakage scenarios")
    s.add_argument("--scenarios", type=int, required=True)
    s.add_argument("--grid", type=int, nargs=2, metavar=("H", "W"), default=(64, 64))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--max-reduction", type=float)
    s.add_argument("--bins", type=int, default=30)
    s.set_defaults(func=cmd_gen_data)

    s = sub.add_parser("simulate", help="model shot gathers for every map")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--dx", type=float, default=10.0)
    s.add_argument("--dt", type=float, default=1.5e-3)
    s.add_argument("--nt", type=int, default=400)
    s.add_argument("--freq", type=float, default=15.0)
    s.add_argument("--shots", type=int, default=3)
    s.add_argument("--boundary", type=int, default=20)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("train-gen", help="train a generative augmenter")
    s.add_argument("--model", choices=sorted(MODEL_ALIASES), default="vae-reg")
    s.add_argument("--data", required=True)
    s.add_argument("--epochs", type=int, default=100)
    s.add_argument("--batch", type=int, default=32)
    s.add_argument("--lr", type=float, default=1e-4)
    s.add_argument("--gamma", type=float, default=1e2)
    s.add_argument("--layers", choices=("A", "B", "C", "D"), default="D")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--channels", type=int, nargs="+", default=[16, 32, 64, 128])
    s.add_argument("--latent", type=int, default=64)
    s.add_argument("--out", required=True)
    split_opts(s, "train")
    s.set_defaults(func=cmd_train_gen)

    s = sub.add_parser("augment", help="generate synthetic maps from a checkpoint")
    s.add_argument("--ckpt", required=True, help="generator checkpoint directory, or 'linear'")
    s.add_argument("--data", required=True, help="dataset directory holding the training scenarios")
    s.add_argument("--count", type=int, default=3000)
    s.add_argument("--alpha-mode", choices=("endpoints", "adjacent"), default="adjacent")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--simulate", action="store_true",
                   help="also model gathers, using the acquisition stored with --data's gathers")
    s.add_argument("--out", required=True)
    split_opts(s, "train")
    s.set_defaults(func=cmd_augment)

    s = sub.add_parser("train-inv", help="train the inversion network")
    s.add_argument("--train", required=True, help="directory written by 'simulate'")
    s.add_argument("--aug", help="augmentation directory with simulated gathers")
    s.add_argument("--aug-count", type=int, help="use only the first N synthetic samples")
    s.add_argument("--epochs", type=int, default=80)
    s.add_argument("--batch", type=int, default=24)
    s.add_argument("--lr", type=float, default=0.01)
    s.add_argument("--wd", type=float, default=1e-4)
    s.add_argument("--decimate", type=int, default=4)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    split_opts(s, "train")
    s.set_defaults(func=cmd_train_inv)

    s = sub.add_parser("test-inv", help="score an inversion checkpoint")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--test", required=True)
    s.add_argument("--subset", choices=("general", "small"), default="general")
    s.add_argument("--report")
    split_opts(s, "test")
    s.set_defaults(func=cmd_test_inv)

    s = sub.add_parser("eval", help="write metrics, CSVs and figures for a checkpoint")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--test", required=True)
    s.add_argument("--baseline", required=True)
    s.add_argument("--out", required=True)
    split_opts(s, "test")
    s.set_defaults(func=cmd_eval)

    for name, func, helptext in (("run", cmd_run, "full baseline-vs-augmented experiment"),
                                 ("sweep-size", cmd_sweep_size, "augmentation-size sweep"),
                                 ("grid-search", cmd_grid_search, "generator hyper-parameter grid")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--config")
        s.add_argument("--profile", choices=("desk", "paper", "smoke"), default="desk")
        s.add_argument("--output-root")
        s.add_argument("--out")
        s.set_defaults(func=func)
        if name == "sweep-size":
            s.add_argument("--sizes", default="350,800,1500,3000,4500,6000,7500")
            s.add_argument("--seed-groups", type=int)
        if name == "grid-search":
            s.add_argument("--param", choices=("layers", "gamma"), required=True)
            s.add_argument("--values", help="comma-separated grid overriding the default")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
