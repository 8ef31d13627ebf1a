"""Fixed-weight VGG-shaped feature extractor for the perception loss.

Five blocks, each a single 3x3 convolution + ReLU (conv1_1 .. conv5_1), with
2x max-pooling between blocks.  Weights are orthogonal matrices drawn from a
seeded generator, so the extractor is fully reproducible without downloading
ImageNet weights.  Real VGG-19 first-of-block kernels can be dropped in with
:meth:`FeatureExtractor.load`.
"""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from ._io import MissingLayerError, ShapeMismatchError, load_weights, save_weights

VGG_WIDTHS = (64, 128, 256, 512, 512)
LAYER_NAMES = tuple(f"conv{i}_1" for i in range(1, 6))
LAYER_SELECTIONS = {
    "A": LAYER_NAMES[:2],
    "B": LAYER_NAMES[:3],
    "C": LAYER_NAMES[:4],
    "D": LAYER_NAMES[:5],
}
DEFAULT_SEED = 1337


def layer_selection(selection: str | Sequence[str]) -> tuple[str, ...]:
    """Resolve ``"A".."D"`` or an explicit prefix of the canonical layer order."""
    if isinstance(selection, str):
        try:
            return LAYER_SELECTIONS[selection.upper()]
        except KeyError:
            raise ValueError(f"unknown layer selection {selection!r}; expected one of A, B, C, D") from None
    names = tuple(selection)
    if not names or names != LAYER_NAMES[: len(names)]:
        raise ValueError(f"layer selection must be a non-empty prefix of {LAYER_NAMES}, got {names}")
    return names


def orthogonal_weights(shape: tuple[int, ...], rng: np.random.Generator, gain: float = np.sqrt(2.0)) -> np.ndarray:
    rows, cols = shape[0], int(np.prod(shape[1:]))
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return (gain * q[:rows, :cols]).reshape(shape)


class FeatureExtractor(nn.Module):
    """Read-only multi-scale feature maps; ``forward`` returns the requested layers."""

    def __init__(self, widths: Sequence[int] = VGG_WIDTHS, in_channels: int = 3, seed: int = DEFAULT_SEED):
        super().__init__()
        self.widths = tuple(widths)
        self.in_channels = in_channels
        self.names = tuple(f"conv{i}_1" for i in range(1, len(self.widths) + 1))
        chans = (in_channels,) + self.widths
        self.convs = nn.ModuleList(nn.Conv2d(chans[i], chans[i + 1], 3, padding=1) for i in range(len(self.widths)))
        rng = np.random.default_rng(seed)
        with torch.no_grad():
            for conv in self.convs:
                conv.weight.copy_(torch.from_numpy(orthogonal_weights(tuple(conv.weight.shape), rng)))
                conv.bias.zero_()
        self.requires_grad_(False)
        self.eval()
        self.provenance = f"fixed-seed-{seed}"

    @property
    def min_size(self) -> int:
        return 2 ** len(self.widths)

    def forward(self, image: torch.Tensor, layers: Sequence[str] | str | None = None) -> list[torch.Tensor]:
        wanted = self.names if layers is None else (
            layer_selection(layers) if isinstance(layers, str) else tuple(layers)
        )
        unknown = set(wanted) - set(self.names)
        if unknown:
            raise ValueError(f"extractor has no layer(s) {sorted(unknown)}")
        if image.dim() == 2:
            image = image[None, None]
        elif image.dim() == 3:
            image = image[:, None]
        if min(image.shape[-2:]) < self.min_size:
            raise ValueError(
                f"image {tuple(image.shape[-2:])} too small: need at least {self.min_size}x{self.min_size}"
            )
        x = image
        if x.shape[1] == 1 and self.in_channels != 1:
            x = x.expand(-1, self.in_channels, -1, -1)
        out = []
        last = max(self.names.index(n) for n in wanted)
        for i, conv in enumerate(self.convs[: last + 1]):
            if i:
                x = F.max_pool2d(x, 2)
            x = F.relu(conv(x))
            if self.names[i] in wanted:
                out.append(x)
        return out

    def state_arrays(self) -> dict[str, np.ndarray]:
        arrays = {}
        for name, conv in zip(self.names, self.convs):
            arrays[f"{name}.weight"] = conv.weight.detach().cpu().numpy()
            arrays[f"{name}.bias"] = conv.bias.detach().cpu().numpy()
        return arrays

    def save(self, path: str | Path) -> Path:
        return save_weights(path, self.state_arrays())

    def load(self, path: str | Path) -> "FeatureExtractor":
        arrays = load_weights(path)
        self.install(arrays)
        self.provenance = f"loaded:{Path(path).name}"
        return self

    def install(self, arrays: dict[str, np.ndarray]) -> None:
        for name, conv in zip(self.names, self.convs):
            for part, param in (("weight", conv.weight), ("bias", conv.bias)):
                key = f"{name}.{part}"
                if key not in arrays:
                    raise MissingLayerError(f"weight file has no tensor {key!r}")
                if tuple(arrays[key].shape) != tuple(param.shape):
                    raise ShapeMismatchError(
                        f"layer {key}: expected shape {tuple(param.shape)}, file has {tuple(arrays[key].shape)}"
                    )
            with torch.no_grad():
                conv.weight.copy_(torch.from_numpy(arrays[f"{name}.weight"]))
                conv.bias.copy_(torch.from_numpy(arrays[f"{name}.bias"]))


_DEFAULT: FeatureExtractor | None = None


def default_extractor() -> FeatureExtractor:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = FeatureExtractor()
    return _DEFAULT


def extract_features(image, layers: str | Sequence[str] = "D",
                     extractor: FeatureExtractor | None = None) -> dict[str, torch.Tensor]:
    """Feature pyramid keyed by layer name for a [0, 1]-scaled map (or batch)."""
    extractor = extractor or default_extractor()
    names = layer_selection(layers) if isinstance(layers, str) else tuple(layers)
    x = torch.as_tensor(np.asarray(image) if not torch.is_tensor(image) else image)
    x = x.to(next(extractor.parameters()).dtype)
    feats = extractor(x, names)
    return dict(zip(names, feats))


def load_extractor(path: str | Path, widths: Sequence[int] = VGG_WIDTHS) -> FeatureExtractor:
    return FeatureExtractor(widths).load(path)
