import csv
import json

import numpy as np
import pytest

from seismoaug.datagen import load_scenarios, split_dataset
from seismoaug.genmodels import GeneratorCheckpoint
from seismoaug.inversion import InversionCheckpoint
from seismoaug.pipeline import (
    ExperimentConfig,
    StageCache,
    generator_stage,
    generator_test_loss,
    grid_search,
    run_experiment,
    summarize_sweep,
)


def smoke(tmp_path, **experiment):
    cfg = ExperimentConfig.from_profile("smoke")
    return cfg.with_changes("experiment", output_root=str(tmp_path / "runs"),
                            cache_root=str(tmp_path / "cache"), **experiment)


@pytest.fixture(scope="module")
def smoke_run(tmp_path_factory):
    return run_experiment(smoke(tmp_path_factory.mktemp("smoke")))


def test_profiles():
    desk = ExperimentConfig.from_profile("desk")
    assert (desk.data.n_scenarios, desk.data.height, desk.generator.epochs, desk.inversion.epochs,
            desk.augmentation.count, len(desk.seeds), desk.generator.lr) == (60, 64, 15, 20, 180, 2, 1e-3)
    paper = ExperimentConfig.from_profile("paper")
    assert paper.generator.batch_size == 32 and paper.generator.lr == 1e-4 and paper.generator.epochs == 100
    assert paper.inversion.epochs == 80 and paper.inversion.batch_size == 24 and paper.inversion.lr == 0.01
    assert paper.inversion.weight_decay == 1e-4 and paper.augmentation.count == 3000
    with pytest.raises(ValueError):
        ExperimentConfig.from_profile("huge")


def test_ini_roundtrip(tmp_path):
    cfg = ExperimentConfig.from_profile("smoke").with_changes("generator", gamma=0.5, layers="B")
    path = cfg.to_ini(tmp_path / "c.ini")
    back = ExperimentConfig.from_ini(path, "desk")
    assert back == cfg and back.config_hash() == cfg.config_hash()


def test_ini_overrides_profile(tmp_path):
    (tmp_path / "c.ini").write_text("[inversion]\nepochs = 3\n[experiment]\nseeds = 4,5\n")
    cfg = ExperimentConfig.from_ini(tmp_path / "c.ini", "smoke")
    assert cfg.inversion.epochs == 3 and cfg.seeds == (4, 5) and cfg.data.height == 32


@pytest.mark.parametrize("text", ["[inversion]\nepoch = 3\n", "[bogus]\nx = 1\n", "[experiment]\nseeds =\n"])
def test_ini_rejects_bad_input(tmp_path, text):
    (tmp_path / "c.ini").write_text(text)
    with pytest.raises(ValueError):
        ExperimentConfig.from_ini(tmp_path / "c.ini")


def test_missing_paths_rejected(tmp_path):
    with pytest.raises(FileNotFoundError):
        ExperimentConfig.from_ini(tmp_path / "absent.ini")
    with pytest.raises(FileNotFoundError):
        ExperimentConfig.from_profile("smoke").with_changes("data", data_dir=str(tmp_path / "nope"))


def test_cache_root_env_override(tmp_path, monkeypatch):
    cfg = smoke(tmp_path)
    monkeypatch.delenv("SEISMO_CACHE", raising=False)
    assert cfg.cache_root == tmp_path / "cache"
    monkeypatch.setenv("SEISMO_CACHE", str(tmp_path / "elsewhere"))
    assert cfg.cache_root == tmp_path / "elsewhere"


def test_stage_cache_builds_once(tmp_path):
    cache = StageCache(tmp_path)
    calls = []

    def build(out):
        calls.append(out)
        (out / "x.txt").write_text("hi")

    a, cached_a = cache.get_or_build("demo", {"k": 1}, build)
    b, cached_b = cache.get_or_build("demo", {"k": 1}, build)
    assert a == b and not cached_a and cached_b and len(calls) == 1
    assert (a / "x.txt").read_text() == "hi"
    c, _ = cache.get_or_build("demo", {"k": 2}, build)
    assert c != a


def test_run_layout(smoke_run):
    out = smoke_run.directory
    assert smoke_run.ok
    for name in ("config.ini", "runs.csv", "comparison.csv", "manifest.json"):
        assert (out / name).exists(), name
    rows = list(csv.reader(open(out / "comparison.csv")))
    assert rows[0] == ["test_set", "baseline", "vae_reg"]
    assert [r[0] for r in rows[1:]] == ["General", "Small leakage"]
    assert (out / "eval" / "baseline" / "metrics.csv").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "ok" and manifest["seeds"] == [0]
    assert all("wall_time" in s for s in manifest["stages"])
    assert "comparison.csv" in manifest["outputs"]


def test_comparison_is_seed_mean_of_runs(smoke_run):
    runs = list(csv.DictReader(open(smoke_run.directory / "runs.csv")))
    comp = {r["test_set"]: r for r in csv.DictReader(open(smoke_run.directory / "comparison.csv"))}
    for model in ("baseline", "vae_reg"):
        vals = [float(r["loss"]) for r in runs if r["model"] == model and r["subset"] == "general"]
        assert float(comp["General"][model]) == pytest.approx(np.mean(vals), rel=1e-12)


def test_rerun_same_manifest_hash(tmp_path):
    import shutil

    cfg = smoke(tmp_path)
    first = run_experiment(cfg)
    before = json.loads((first.directory / "manifest.json").read_text())
    shutil.rmtree(cfg.cache_root)
    second = run_experiment(cfg)
    after = json.loads((second.directory / "manifest.json").read_text())
    assert not any(s.get("cached") for s in after["stages"])
    assert before["manifest_hash"] == after["manifest_hash"]
    assert before["outputs"] == after["outputs"]


def test_zero_augmentation_equals_baseline(tmp_path):
    cfg = smoke(tmp_path).with_changes("augmentation", count=0)
    res = run_experiment(cfg, evaluate=False)
    stages = {s["name"]: s for s in res.manifest.stages}
    assert not any(n.startswith("augment") or n.startswith("train-gen") for n in stages)
    base = InversionCheckpoint.load(stages["train-inv:baseline:0"]["directory"])
    aug = InversionCheckpoint.load(stages["train-inv:vae_reg:0"]["directory"])
    assert aug.aug_tag == "vae_reg" and base.aug_tag == "none"
    for (k, v), (k2, v2) in zip(base.model.state_dict().items(), aug.model.state_dict().items()):
        assert k == k2 and np.array_equal(v.numpy(), v2.numpy())


def test_failure_is_recorded_and_downstream_skipped(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    cfg = smoke(tmp_path).with_changes("data", data_dir=str(empty))
    res = run_experiment(cfg)
    assert not res.ok
    manifest = json.loads((res.directory / "manifest.json").read_text())
    status = [s["status"] for s in manifest["stages"]]
    assert manifest["status"] == "failed" and "failed" in status
    failed_at = status.index("failed")
    assert all(s == "skipped" for s in status[failed_at + 1:]) and len(status) > failed_at + 1
    assert manifest["stages"][failed_at]["error"]


def test_summarize_sweep_statistics():
    runs = [{"size": 300, "small_loss": 0.2}, {"size": 100, "small_loss": 0.5},
            {"size": 300, "small_loss": 0.4}, {"size": 100, "small_loss": 0.5}]
    summary = summarize_sweep(runs)
    assert [s["size"] for s in summary] == [100, 300]
    assert summary[0]["std"] == 0 and summary[1]["mean"] == pytest.approx(0.3)
    assert summary[1]["std"] == pytest.approx(0.1) and summary[1]["n_runs"] == 2


def test_single_point_grid_equals_direct_run(tmp_path):
    cfg = smoke(tmp_path)
    res = grid_search(cfg, "gamma", [10.0], tmp_path / "grid")
    assert len(res.rows) == 1
    cache = StageCache(cfg.cache_root)
    data_dir = next(cfg.cache_root.glob("data-*"))
    gen_dir, cached = generator_stage(cfg, cache, data_dir, "vae_reg", cfg.seeds[0], gamma=10.0)
    assert cached
    _, test = split_dataset(load_scenarios(data_dir), cfg.data.train_fraction)
    # a fresh train from the same hyper-parameters, outside the cache
    from seismoaug.genmodels import train_generative

    train, _ = split_dataset(load_scenarios(data_dir), cfg.data.train_fraction)
    direct = train_generative("vae_reg", train, cfg.gen_hyper(cfg.seeds[0], gamma=10.0))
    loss, n = generator_test_loss(direct, test)
    assert res.rows[0]["test_loss"] == loss and res.rows[0]["n_maps"] == n
    assert GeneratorCheckpoint.load(gen_dir).history == direct.history
    with pytest.raises(ValueError):
        grid_search(cfg, "lr", [1.0])
