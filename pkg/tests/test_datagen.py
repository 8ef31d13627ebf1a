import numpy as np
import pytest
from hypothesis import given, strategies as st

from seismoaug.datagen import (
    CLASS_EDGES,
    CLASS_ORDER,
    YEARS,
    GeneratorConfig,
    LeakClass,
    LeakageScenario,
    VelocityMap,
    classify_leak,
    generate_baseline,
    generate_dataset,
    generate_scenario,
    load_baseline,
    load_scenarios,
    mass_histogram,
    plume_area,
    split_dataset,
    write_dataset,
)

SMALL = GeneratorConfig().scaled_to(32, 32)


def test_baseline_has_exactly_the_three_layer_velocities():
    base = generate_baseline(GeneratorConfig(velocities=(1800.0, 2400.0, 3000.0)))
    assert base.shape == (64, 64)
    assert sorted(np.unique(base.grid)) == [1800.0, 2400.0, 3000.0]
    for row in base.grid:
        assert len(np.unique(row)) == 1
    assert np.all(np.diff(base.grid[:, 0]) >= 0)


def test_baseline_is_deterministic():
    a, b = generate_baseline(SMALL), generate_baseline(SMALL)
    assert a.grid.tobytes() == b.grid.tobytes()


def test_baseline_rejects_velocity_inversion():
    with pytest.raises(ValueError, match="velocity inversion with depth"):
        generate_baseline(GeneratorConfig(velocities=(3000.0, 2400.0, 1800.0)))


@pytest.mark.parametrize("kw", [{"velocities": (0.0, 2400.0, 3000.0)}, {"interfaces": (22, 70)}])
def test_baseline_rejects_bad_config(kw):
    with pytest.raises(ValueError):
        generate_baseline(GeneratorConfig(**kw))


@pytest.mark.parametrize("mass,expected", [
    (5.0e6, LeakClass.TINY),
    (3.0e7, LeakClass.MEDIUM),
    (9.10e6, LeakClass.SMALL),
    (2.67e7, LeakClass.MEDIUM),
    (8.05e7, LeakClass.LARGE),
    (0.0, LeakClass.TINY),
])
def test_classify_leak_examples(mass, expected):
    assert classify_leak(mass) is expected


def test_classify_negative_mass():
    with pytest.raises(ValueError):
        classify_leak(-1.0)


@given(st.floats(0, 1e9), st.floats(0, 1e9))
def test_classify_is_monotone(m1, m2):
    lo, hi = sorted((m1, m2))
    assert CLASS_ORDER.index(classify_leak(lo)) <= CLASS_ORDER.index(classify_leak(hi))


@given(st.floats(0, 1e9))
def test_classify_matches_edge_count(mass):
    assert CLASS_ORDER.index(classify_leak(mass)) == sum(mass >= e for e in CLASS_EDGES)


@given(st.integers(0, 2**32 - 1))
def test_scenario_invariants(seed):
    base = generate_baseline(SMALL)
    s = generate_scenario(seed, base, SMALL)
    assert s.velocities.shape == (20, 32, 32)
    assert np.all(np.diff(s.mass_trajectory) >= 0)
    assert np.all(np.diff(plume_area(s.velocities, base)) >= 0)
    assert np.all(s.velocities <= base.grid[None])
    assert np.all(s.velocities > 0)
    # changes stay inside the final plume's bounding box
    changed = np.any(s.velocities != base.grid[None], axis=0)
    if changed.any():
        rows, cols = np.nonzero(changed)
        for v in s.velocities:
            d_rows, d_cols = np.nonzero(v != base.grid)
            if d_rows.size:
                assert rows.min() <= d_rows.min() and d_rows.max() <= rows.max()
                assert cols.min() <= d_cols.min() and d_cols.max() <= cols.max()


def test_zero_reduction_gives_baseline_and_zero_mass():
    cfg = GeneratorConfig(max_reduction=0.0).scaled_to(32, 32)
    base = generate_baseline(cfg)
    s = generate_scenario(11, base, cfg)
    for v in s.velocities:
        np.testing.assert_array_equal(v, base.grid)
    assert np.all(s.mass_trajectory == 0)


def test_scenario_seed_determinism():
    base = generate_baseline(SMALL)
    a, b = generate_scenario(7, base, SMALL), generate_scenario(7, base, SMALL)
    assert a.velocities.tobytes() == b.velocities.tobytes()
    assert np.array_equal(a.mass_trajectory, b.mass_trajectory)


def test_negative_seed_rejected():
    with pytest.raises(ValueError):
        generate_scenario(-1, generate_baseline(SMALL), SMALL)


def test_velocity_map_year_validation():
    with pytest.raises(ValueError):
        VelocityMap(np.ones((2, 2)), 15, 0, 0.0)
    with pytest.raises(ValueError):
        VelocityMap(np.ones((2, 2)), 210, 0, 0.0)
    with pytest.raises(ValueError):
        VelocityMap(np.zeros((2, 2)), 10, 0, 0.0)


def test_scenario_maps_carry_years_and_classes(small_dataset):
    _, scenarios = small_dataset
    s = scenarios[0]
    assert [m.year for m in s.maps] == list(YEARS)
    assert [m.leak_class for m in s.maps] == s.classes


def _fake(n):
    return [LeakageScenario(i, np.ones((20, 2, 2), np.float32), np.zeros(20), i) for i in range(n)]


def test_split_ten_scenarios():
    train, test = split_dataset(_fake(10), 0.8)
    assert len(train) == 8 and len(test) == 2
    assert not {s.scenario_id for s in train} & {s.scenario_id for s in test}


def test_split_full_scale_counts():
    train, test = split_dataset(_fake(991), 800 / 991)
    assert len(train) == 800 and sum(len(s.maps) for s in train) == 16000
    assert len(test) == 191


@given(st.integers(2, 60), st.floats(0.01, 0.99))
def test_split_is_a_partition(n, frac):
    scen = _fake(n)
    train, test = split_dataset(scen, frac)
    ids_a, ids_b = {s.scenario_id for s in train}, {s.scenario_id for s in test}
    assert not ids_a & ids_b and len(train) + len(test) == n and train and test


@pytest.mark.parametrize("frac", [0.0, 1.0, -0.2, 1.5])
def test_split_bad_fraction(frac):
    with pytest.raises(ValueError):
        split_dataset(_fake(4), frac)


def test_split_single_scenario():
    with pytest.raises(ValueError):
        split_dataset(_fake(1), 0.5)


def test_histogram_empty_and_all_tiny():
    h = mass_histogram([], bins=5)
    assert h.counts.sum() == 0 and len(h.counts) == 5
    assert all(v == 0 for v in h.class_fractions.values())
    h = mass_histogram(_fake(1), bins=3)
    assert h.class_fractions[LeakClass.TINY] == 1.0
    assert h.target_fractions[LeakClass.LARGE] == 0.40


def test_histogram_rejects_zero_bins():
    with pytest.raises(ValueError):
        mass_histogram(_fake(1), bins=0)


def test_generator_class_mix_near_targets():
    _, scen = generate_dataset(200, GeneratorConfig(), seed=0)
    h = mass_histogram(scen)
    fr = [h.class_fractions[c] for c in CLASS_ORDER]
    assert all(abs(f - t) < 0.08 for f, t in zip(fr, (0.2, 0.2, 0.2, 0.4))), fr
    tiny_start = np.mean([s.classes[0] is LeakClass.TINY for s in scen])
    assert 0.6 < tiny_start < 0.8


def test_write_and_load_dataset(tmp_path, small_dataset):
    base, scen = small_dataset
    write_dataset(tmp_path, base, scen, bins=4)
    assert (tmp_path / "mass_hist.csv").read_text().splitlines()[0] == "bin_lo,bin_hi,count"
    back = load_scenarios(tmp_path)
    assert [s.scenario_id for s in back] == [s.scenario_id for s in scen]
    for a, b in zip(back, scen):
        assert a.velocities.tobytes() == b.velocities.tobytes()
        np.testing.assert_array_equal(a.mass_trajectory, b.mass_trajectory)
    np.testing.assert_array_equal(load_baseline(tmp_path / "baseline.f32").grid, base.grid)
