import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from seismoaug.datagen import LeakageScenario
from seismoaug.wavesim import (
    CFLError,
    SimConfig,
    SimulationError,
    cfl_check,
    forward_dataset,
    load_archive,
    propagate,
    ricker_wavelet,
    save_archive,
)
from wave_studies import first_arrival_delay, observed_orders, reciprocity_residual, refinement_study


def test_ricker_peak_is_one():
    w = ricker_wavelet(15.0, 1e-3, 1000)
    assert w[100] == 1.0  # t0 = 1.5 / 15 = 0.1 s
    assert w.max() == 1.0


def test_ricker_zero_mean():
    w = ricker_wavelet(15.0, 1e-3, 1000)
    assert abs(w.sum() * 1e-3) < 1e-3 * w.max()


@given(st.floats(5.0, 40.0), st.integers(10, 200))
def test_ricker_even_about_centre(f, m):
    # dt chosen so the centre 1.5/f falls on sample m
    w = ricker_wavelet(f, 1.5 / f / m, 2 * m + 1)
    np.testing.assert_allclose(w[:m][::-1], w[m + 1:], rtol=0, atol=1e-12)


def test_ricker_short_record_warns():
    with pytest.warns(UserWarning, match="main lobe"):
        ricker_wavelet(15.0, 1e-3, 50)


@pytest.mark.parametrize("f,dt", [(0.0, 1e-3), (15.0, 0.0), (-1.0, 1e-3)])
def test_ricker_rejects_nonpositive(f, dt):
    with pytest.raises(ValueError):
        ricker_wavelet(f, dt, 100)


def test_cfl_examples():
    v = np.full((4, 4), 3000.0)
    res = cfl_check(SimConfig(dx=10, dt=1e-3, cfl_coeff=0.5), v)
    assert res.passed and res.max_dt == pytest.approx(0.5 * 10 / 3000)
    at_bound = cfl_check(SimConfig(dx=10, dt=res.max_dt, cfl_coeff=0.5), v)
    assert at_bound.passed
    doubled = cfl_check(SimConfig(dx=10, dt=1e-3), 2 * v)
    assert doubled.max_dt == pytest.approx(res.max_dt / 2)


def test_cfl_violation_raises_before_stepping(monkeypatch):
    import seismoaug.wavesim as ws

    def never(*a, **k):
        raise AssertionError("time stepping started")

    monkeypatch.setattr(ws, "_leapfrog", never)
    cfg = SimConfig(dx=10, dt=5e-3, nt=50, source_positions=((1, 1),), receiver_positions=((1, 2),))
    with pytest.raises(CFLError):
        propagate(np.full((8, 8), 3000.0), cfg)


def test_blowup_reports_step():
    # a loose cfl_coeff lets an unstable dt through the check
    cfg = SimConfig(dx=10, dt=4e-3, nt=400, cfl_coeff=5.0, boundary_width=2,
                    source_positions=((5, 5),), receiver_positions=((5, 6),))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(SimulationError) as info:
            propagate(np.full((12, 12), 3000.0), cfg, scenario_id=4, year=30)
    assert info.value.step is not None and 0 < info.value.step < 400
    assert info.value.scenario_id == 4 and info.value.year == 30 and info.value.shot == 0


def test_zero_source_gives_zero_traces():
    cfg = SimConfig.surface_acquisition(24, 24, 2, nt=200)
    assert not propagate(np.full((24, 24), 2200.0), cfg, source_scale=0.0).traces.any()


def test_linear_in_source():
    vel = 2000 + 300 * np.random.default_rng(1).random((24, 24))
    cfg = SimConfig.surface_acquisition(24, 24, 2, nt=200)
    one, two = propagate(vel, cfg).traces, propagate(vel, cfg, source_scale=2.0).traces
    np.testing.assert_array_equal(two, 2 * one)


def test_first_arrival_matches_straight_ray():
    delay, expected = first_arrival_delay()
    assert abs(delay - expected) <= 0.02 * expected


def test_reciprocity():
    assert reciprocity_residual() < 1e-6


def test_energy_stays_bounded():
    cfg = SimConfig.surface_acquisition(32, 32, 1, nt=1500)
    prop = propagate(np.full((32, 32), 2500.0), cfg, snapshot_every=50)
    peaks = np.abs(prop.snapshots[0]).max(axis=(1, 2))
    assert np.all(np.isfinite(peaks))
    assert peaks[-1] < 1e-2 * peaks.max()


def test_refinement_study():
    errs = refinement_study()
    assert min(observed_orders(errs["fixed"])) >= 4
    assert all(a > b for a, b in zip(errs["scaled"], errs["scaled"][1:]))


def _toy_scenarios():
    rng = np.random.default_rng(0)
    return [
        LeakageScenario(i, (2000 + 200 * rng.random((20, 16, 16))).astype(np.float32), np.zeros(20), i)
        for i in range(2)
    ]


def test_forward_dataset_counts_and_roundtrip(tmp_path):
    cfg = SimConfig.surface_acquisition(16, 16, 3, nt=140)
    scen = _toy_scenarios()
    arch = forward_dataset(scen, cfg)
    assert len(arch) == 120
    assert arch.gathers[0].shape == (20, 3, 16, 140)
    save_archive(tmp_path / "a", arch)
    back = load_archive(tmp_path / "a")
    assert back.config == cfg
    for sid in arch.gathers:
        assert back.gathers[sid].tobytes() == arch.gathers[sid].tobytes()
    again = forward_dataset(scen, cfg)
    assert all(again.gathers[s].tobytes() == arch.gathers[s].tobytes() for s in arch.gathers)


def test_identical_maps_identical_gathers():
    cfg = SimConfig.surface_acquisition(16, 16, 2, nt=140)
    vel = np.full((20, 16, 16), 2100.0, dtype=np.float32)
    arch = forward_dataset([LeakageScenario(0, vel, np.zeros(20), 0)], cfg)
    g = arch.gathers[0]
    assert all(np.array_equal(g[0], g[k]) for k in range(20))


def test_forward_dataset_rejects_mixed_dims():
    a = LeakageScenario(0, np.full((20, 8, 8), 2000.0, np.float32), np.zeros(20), 0)
    b = LeakageScenario(1, np.full((20, 8, 9), 2000.0, np.float32), np.zeros(20), 1)
    with pytest.raises(ValueError, match="share dims"):
        forward_dataset([a, b], SimConfig.surface_acquisition(8, 8, 1, nt=20))
