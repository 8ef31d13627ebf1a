import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from seismoaug._io import MissingLayerError, ShapeMismatchError, TruncatedWeightFile, load_weights, save_weights
from seismoaug.featureext import (
    LAYER_NAMES,
    FeatureExtractor,
    default_extractor,
    extract_features,
    layer_selection,
    load_extractor,
)


def test_selection_d_shapes_on_64():
    feats = extract_features(np.random.default_rng(0).random((64, 64)), "D")
    assert list(feats) == list(LAYER_NAMES)
    assert [f.shape[1] for f in feats.values()] == [64, 128, 256, 512, 512]
    assert [f.shape[-1] for f in feats.values()] == [64, 32, 16, 8, 4]


@settings(max_examples=10)
@given(st.integers(32, 80), st.integers(32, 80))
def test_schedule_holds_for_any_size(h, w):
    ext = FeatureExtractor(widths=(2, 3, 4, 5, 6))
    feats = ext(torch.rand(1, h, w))
    for i, f in enumerate(feats):
        assert f.shape[1] == (2, 3, 4, 5, 6)[i]
        assert f.shape[-2:] == (h // 2**i, w // 2**i)


@pytest.mark.parametrize("sel,n", [("A", 2), ("B", 3), ("C", 4), ("D", 5)])
def test_selections_are_prefixes(sel, n):
    assert layer_selection(sel) == LAYER_NAMES[:n]


@pytest.mark.parametrize("bad", ["E", [], ["conv2_1"], ["conv1_1", "conv3_1"]])
def test_bad_selection(bad):
    with pytest.raises(ValueError):
        layer_selection(bad)


def test_zero_image_gives_zero_features():
    for f in extract_features(np.zeros((32, 32)), "D").values():
        assert not f.any()


def test_deterministic_and_order_independent():
    rng = np.random.default_rng(2)
    a, b = rng.random((32, 32)), rng.random((32, 32))
    one = default_extractor()(torch.tensor(np.stack([a, b]), dtype=torch.float32))
    two = default_extractor()(torch.tensor(np.stack([b, a]), dtype=torch.float32))
    for x, y in zip(one, two):
        assert torch.equal(x[0], y[1]) and torch.equal(x[1], y[0])
    fresh = FeatureExtractor()(torch.tensor(a, dtype=torch.float32))
    again = FeatureExtractor()(torch.tensor(a, dtype=torch.float32))
    assert all(torch.equal(x, y) for x, y in zip(fresh, again))


def test_too_small_image():
    with pytest.raises(ValueError, match="too small"):
        extract_features(np.zeros((16, 40)))


def test_save_load_roundtrip_identical_outputs(tmp_path):
    src = FeatureExtractor()
    path = src.save(tmp_path / "vgg.bin")
    loaded = load_extractor(path)
    assert loaded.provenance == "loaded:vgg.bin"
    for k, v in src.state_arrays().items():
        assert loaded.state_arrays()[k].tobytes() == v.tobytes()
    x = torch.rand(2, 32, 32)
    assert all(torch.equal(p, q) for p, q in zip(src(x), loaded(x)))


def test_renamed_layer_shape_mismatch(tmp_path):
    arrays = FeatureExtractor().state_arrays()
    arrays["conv2_1.weight"] = arrays["conv3_1.weight"]  # (256, 128, 3, 3)
    path = save_weights(tmp_path / "w.bin", arrays)
    with pytest.raises(ShapeMismatchError, match="conv2_1"):
        load_extractor(path)


def test_missing_layer(tmp_path):
    arrays = FeatureExtractor().state_arrays()
    del arrays["conv4_1.bias"]
    path = save_weights(tmp_path / "w.bin", arrays)
    with pytest.raises(MissingLayerError, match="conv4_1.bias"):
        load_extractor(path)


def test_empty_file_truncated(tmp_path):
    (tmp_path / "e.bin").write_bytes(b"")
    with pytest.raises(TruncatedWeightFile):
        load_extractor(tmp_path / "e.bin")
    assert not issubclass(TruncatedWeightFile, ShapeMismatchError)
    assert not issubclass(MissingLayerError, TruncatedWeightFile)


def test_extractor_is_frozen():
    assert not any(p.requires_grad for p in default_extractor().parameters())
