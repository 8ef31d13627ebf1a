"""Gather-to-velocity inversion network, trained with an L1 loss.

The network sees shot gathers laid out as (shots, time, receivers).  An
encoder of strided conv blocks shrinks time and receivers, the remaining time
axis is averaged away, a dense bottleneck mixes receivers, and an upsampling
decoder paints the H x W map.  Inputs are standardized with statistics from
the real training gathers and targets are scaled to [0, 1] with the real
training velocity bounds; both are stored in the checkpoint.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from ._io import load_weights, save_weights, write_json
from .datagen import CLASS_ORDER, YEARS, LeakageScenario, LeakClass
from .genmodels.augment import GENERATOR_TAGS, AugmentationSet
from .wavesim import GatherArchive

log = logging.getLogger(__name__)

LEAK = 0.2
AUGMENTATION_TAGS = ("none",) + GENERATOR_TAGS
SUBSETS = {"general": tuple(CLASS_ORDER), "small": (LeakClass.TINY, LeakClass.SMALL)}
ENCODER_STRIDES = ((2, 1), (2, 1), (2, 2), (2, 2), (2, 2))


@dataclass(frozen=True)
class InvArch:
    height: int
    width: int
    n_shots: int
    n_receivers: int
    nt: int
    decimate: int = 4
    widths: tuple[int, ...] = (8, 16, 32, 64, 128)
    decoder_channels: tuple[int, ...] = (64, 32, 16, 8)
    bottleneck: int = 256

    def __post_init__(self):
        if len(self.widths) != len(ENCODER_STRIDES):
            raise ValueError(f"encoder needs {len(ENCODER_STRIDES)} widths")

    @property
    def nt_in(self) -> int:
        return math.ceil(self.nt / self.decimate)

    @property
    def receivers_out(self) -> int:
        r = self.n_receivers
        for _, s in ENCODER_STRIDES:
            r = math.ceil(r / s)
        return r

    @property
    def seed_hw(self) -> tuple[int, int]:
        n = len(self.decoder_channels)
        return math.ceil(self.height / 2**n), math.ceil(self.width / 2**n)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["widths"], d["decoder_channels"] = list(self.widths), list(self.decoder_channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "InvArch":
        d = dict(d)
        d["widths"], d["decoder_channels"] = tuple(d["widths"]), tuple(d["decoder_channels"])
        return cls(**d)


def _block(c_in: int, c_out: int, stride=1) -> nn.Sequential:
    return nn.Sequential(nn.Conv2d(c_in, c_out, 3, stride=stride, padding=1), nn.BatchNorm2d(c_out),
                         nn.LeakyReLU(LEAK))


class InversionNet(nn.Module):
    def __init__(self, arch: InvArch):
        super().__init__()
        self.arch = arch
        chans = (arch.n_shots,) + arch.widths
        self.encoder = nn.ModuleList(
            _block(chans[i], chans[i + 1], stride) for i, stride in enumerate(ENCODER_STRIDES)
        )
        self.fc_in = nn.Linear(arch.widths[-1] * arch.receivers_out, arch.bottleneck)
        h, w = arch.seed_hw
        dec = arch.decoder_channels
        self.fc_out = nn.Linear(arch.bottleneck, dec[0] * h * w)
        outs = dec[1:] + (dec[-1],)
        self.decoder = nn.ModuleList(_block(a, b) for a, b in zip(dec, outs))
        self.out = nn.Conv2d(outs[-1], 1, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """(B, shots, time, receivers) standardized gathers -> (B, H, W) scaled maps."""
        a = self.arch
        if x.shape[1:] != (a.n_shots, a.nt_in, a.n_receivers):
            raise ValueError(f"expected gathers of shape {(a.n_shots, a.nt_in, a.n_receivers)}, got {tuple(x.shape[1:])}")
        for block in self.encoder:
            x = block(x)
        x = x.mean(dim=2)
        x = F.leaky_relu(self.fc_in(x.flatten(1)), LEAK)
        h, w = a.seed_hw
        x = F.leaky_relu(self.fc_out(x), LEAK).view(len(x), -1, h, w)
        for block in self.decoder:
            x = block(F.interpolate(x, scale_factor=2, mode="nearest"))
        return self.out(x)[:, 0, : a.height, : a.width]


def invnet_loss(pred: torch.Tensor, truth: torch.Tensor) -> torch.Tensor:
    """Mean absolute error over pixels and batch."""
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(truth.shape)}")
    return torch.mean(torch.abs(pred - truth))


@dataclass
class PairSet:
    """Gathers (N, shots, receivers, nt) with their target maps (N, H, W).

    ``leak_class`` holds class indices into ``CLASS_ORDER`` (-1 when unknown).
    """

    gathers: np.ndarray
    targets: np.ndarray
    leak_class: np.ndarray
    provenance: str = "real"
    tag: str = "none"
    labels: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.gathers) != len(self.targets) or len(self.targets) != len(self.leak_class):
            raise ValueError("gathers, targets and classes must have equal length")

    def __len__(self) -> int:
        return len(self.targets)

    def subset(self, name: str) -> "PairSet":
        if name not in SUBSETS:
            raise ValueError(f"subset must be one of {sorted(SUBSETS)}, got {name!r}")
        codes = [CLASS_ORDER.index(c) for c in SUBSETS[name]]
        keep = np.flatnonzero(np.isin(self.leak_class, codes))
        return self.take(keep)

    def take(self, idx) -> "PairSet":
        idx = np.asarray(idx, dtype=np.int64)
        labels = [self.labels[i] for i in idx] if self.labels else []
        return PairSet(self.gathers[idx], self.targets[idx], self.leak_class[idx], self.provenance, self.tag, labels)


def pairs_from_archive(scenarios: Sequence[LeakageScenario], archive: GatherArchive) -> PairSet:
    gathers, targets, classes, labels = [], [], [], []
    for s in scenarios:
        gathers.append(archive.gathers[s.scenario_id])
        targets.append(s.velocities)
        classes.extend(CLASS_ORDER.index(c) for c in s.classes)
        labels.extend((s.scenario_id, y) for y in YEARS[: len(s.velocities)])
    if not targets:
        raise ValueError("no scenarios")
    return PairSet(np.concatenate(gathers), np.concatenate(targets), np.array(classes, dtype=np.int64),
                   "real", "none", labels)


def pairs_from_augmentation(aug: AugmentationSet) -> PairSet:
    if aug.gathers is None:
        raise ValueError("augmentation set has no simulated gathers")
    labels = [(int(s), float(a)) for s, a in zip(aug.scenario_id, aug.alpha)]
    return PairSet(aug.gathers, aug.maps, np.full(len(aug), -1, dtype=np.int64), "synthetic", aug.generator, labels)


@dataclass(frozen=True)
class InvHyper:
    epochs: int = 80
    batch_size: int = 24
    lr: float = 0.01
    weight_decay: float = 1e-4
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Standardizer:
    gather_mean: np.ndarray  # (shots, nt_in, receivers)
    trace_std: np.ndarray  # (shots, 1, receivers)
    vmin: float
    vmax: float

    @classmethod
    def fit(cls, pairs: PairSet, decimate: int) -> "Standardizer":
        x = _layout(pairs.gathers, decimate).astype(np.float64)
        mean = x.mean(axis=0)
        std = np.sqrt(((x - mean) ** 2).mean(axis=(0, 2), keepdims=True))[0]
        std = np.where(std > 0, std, 1.0)
        return cls(mean.astype(np.float32), std.astype(np.float32),
                   float(np.min(pairs.targets)), float(np.max(pairs.targets)))

    def gathers(self, raw: np.ndarray, decimate: int) -> torch.Tensor:
        return torch.from_numpy((_layout(raw, decimate) - self.gather_mean) / self.trace_std)

    def targets(self, maps: np.ndarray) -> torch.Tensor:
        return torch.from_numpy(((np.asarray(maps, dtype=np.float64) - self.vmin) / (self.vmax - self.vmin))
                                .astype(np.float32))

    def to_physical(self, scaled: np.ndarray) -> np.ndarray:
        return scaled * (self.vmax - self.vmin) + self.vmin


def _layout(raw: np.ndarray, decimate: int) -> np.ndarray:
    """(N, shots, receivers, nt) -> (N, shots, nt/decimate, receivers) float32."""
    raw = np.asarray(raw, dtype=np.float32)
    return np.ascontiguousarray(raw[..., ::decimate].transpose(0, 1, 3, 2))


@dataclass
class InversionCheckpoint:
    model: InversionNet
    norm: Standardizer
    hyper: InvHyper
    aug_tag: str = "none"
    n_real: int = 0
    n_synthetic: int = 0
    epoch: int = 0
    history: list[dict] = field(default_factory=list)

    def __post_init__(self):
        if self.aug_tag not in AUGMENTATION_TAGS:
            raise ValueError(f"augmentation tag must be one of {AUGMENTATION_TAGS}, got {self.aug_tag!r}")

    @property
    def arch(self) -> InvArch:
        return self.model.arch

    @torch.no_grad()
    def predict_scaled(self, gathers: np.ndarray, batch: int = 64) -> np.ndarray:
        gathers = np.asarray(gathers)
        single = gathers.ndim == 3
        if single:
            gathers = gathers[None]
        a = self.arch
        if gathers.shape[1:] != (a.n_shots, a.n_receivers, a.nt):
            raise ValueError(f"expected gathers of shape {(a.n_shots, a.n_receivers, a.nt)}, "
                             f"got {tuple(gathers.shape[1:])}")
        self.model.eval()
        out = [self.model(self.norm.gathers(gathers[i:i + batch], a.decimate)).numpy()
               for i in range(0, len(gathers), batch)]
        res = np.concatenate(out)
        return res[0] if single else res

    def predict(self, gathers: np.ndarray) -> np.ndarray:
        """Velocity maps in m/s."""
        return self.norm.to_physical(self.predict_scaled(gathers).astype(np.float64))

    def save(self, directory: str | Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        arrays = {k: v.detach().cpu().numpy() for k, v in self.model.state_dict().items()}
        arrays["norm.gather_mean"] = self.norm.gather_mean
        arrays["norm.trace_std"] = self.norm.trace_std
        save_weights(directory / "weights.bin", arrays)
        write_json(directory / "header.json", {
            "kind": "inversion", "arch": self.arch.to_dict(), "hyper": self.hyper.to_dict(),
            "aug_tag": self.aug_tag, "n_real": self.n_real, "n_synthetic": self.n_synthetic,
            "target_bounds": [self.norm.vmin, self.norm.vmax], "epoch": self.epoch,
        })
        with open(directory / "loss_history.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss"])
            for row in self.history:
                w.writerow([row["epoch"], repr(row["train_loss"])])
        return directory

    @classmethod
    def load(cls, directory: str | Path) -> "InversionCheckpoint":
        directory = Path(directory)
        header = json.loads((directory / "header.json").read_text())
        if header.get("kind") != "inversion":
            raise ValueError(f"{directory} is not an inversion checkpoint")
        arrays = load_weights(directory / "weights.bin")
        norm = Standardizer(arrays.pop("norm.gather_mean"), arrays.pop("norm.trace_std"), *header["target_bounds"])
        model = InversionNet(InvArch.from_dict(header["arch"]))
        model.load_state_dict({k: torch.from_numpy(v) for k, v in arrays.items()})
        model.eval()
        with open(directory / "loss_history.csv", newline="") as fh:
            history = [{"epoch": int(r["epoch"]), "train_loss": float(r["train_loss"])} for r in csv.DictReader(fh)]
        return cls(model, norm, InvHyper(**header["hyper"]), header["aug_tag"], header["n_real"],
                   header["n_synthetic"], header["epoch"], history)


class InversionDiverged(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"non-finite inversion loss at epoch {epoch}")
        self.epoch = epoch


def train_inversion(real_pairs: PairSet, synthetic_pairs: PairSet | None = None, hyper: InvHyper = InvHyper(),
                    decimate: int = 4, aug_tag: str | None = None) -> InversionCheckpoint:
    """Adam with weight decay on the union of real and synthetic pairs.

    Normalization statistics come from the real pairs only, so adding zero
    synthetic pairs reproduces the baseline exactly.  ``aug_tag`` overrides
    the tag taken from ``synthetic_pairs``.
    """
    if len(real_pairs) == 0:
        raise ValueError("no real training pairs")
    n_shots, n_rec, nt = real_pairs.gathers.shape[1:]
    height, width = real_pairs.targets.shape[1:]
    arch = InvArch(height, width, n_shots, n_rec, nt, decimate)
    norm = Standardizer.fit(real_pairs, decimate)
    x = norm.gathers(real_pairs.gathers, decimate)
    y = norm.targets(real_pairs.targets)
    tag, n_syn = "none", 0
    if synthetic_pairs is not None and len(synthetic_pairs):
        if synthetic_pairs.gathers.shape[1:] != real_pairs.gathers.shape[1:]:
            raise ValueError("synthetic gathers do not match the real acquisition")
        x = torch.cat([x, norm.gathers(synthetic_pairs.gathers, decimate)])
        y = torch.cat([y, norm.targets(synthetic_pairs.targets)])
        tag, n_syn = synthetic_pairs.tag, len(synthetic_pairs)

    tag = aug_tag or tag
    torch.manual_seed(hyper.seed)
    model = InversionNet(arch)
    opt = torch.optim.Adam(model.parameters(), lr=hyper.lr, weight_decay=hyper.weight_decay)
    shuffle_gen = torch.Generator().manual_seed(hyper.seed + 1)
    n = len(y)
    history = []
    for epoch in range(1, hyper.epochs + 1):
        model.train()
        order = torch.randperm(n, generator=shuffle_gen)
        total = 0.0
        for start in range(0, n, hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            loss = invnet_loss(model(x[idx]), y[idx])
            if not torch.isfinite(loss):
                raise InversionDiverged(epoch)
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.detach()) * len(idx)
        history.append({"epoch": epoch, "train_loss": total / n})
        log.info("inversion epoch %d/%d loss=%.6g", epoch, hyper.epochs, total / n)
    model.eval()
    return InversionCheckpoint(model, norm, hyper, tag, len(real_pairs), n_syn, hyper.epochs, history)


@dataclass
class InversionReport:
    subset: str
    loss: float
    per_sample: np.ndarray  # MAE in [0, 1]-scaled velocity units
    leak_class: np.ndarray
    labels: list

    def class_losses(self) -> dict[LeakClass, tuple[float, int]]:
        out = {}
        for code, cls in enumerate(CLASS_ORDER):
            sel = self.per_sample[self.leak_class == code]
            if len(sel):
                out[cls] = (float(sel.mean()), len(sel))
        return out


def test_inversion(checkpoint: InversionCheckpoint, test_pairs: PairSet, subset: str = "general") -> InversionReport:
    """Mean scaled-velocity MAE over a class subset, with the per-sample list."""
    chosen = test_pairs.subset(subset)
    if len(chosen) == 0:
        raise ValueError(f"test subset {subset!r} is empty")
    pred = checkpoint.predict_scaled(chosen.gathers).astype(np.float64)
    truth = checkpoint.norm.targets(chosen.targets).numpy().astype(np.float64)
    per_sample = np.abs(pred - truth).mean(axis=(1, 2))
    return InversionReport(subset, float(per_sample.mean()), per_sample, chosen.leak_class, chosen.labels)


# keep pytest from collecting the function above as a test
test_inversion.__test__ = False
