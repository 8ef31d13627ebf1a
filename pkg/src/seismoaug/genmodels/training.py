"""Training and checkpointing for the generative augmenters."""
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

from .._io import load_weights, save_weights, write_json
from ..datagen import YEARS, LeakageScenario
from ..featureext import FeatureExtractor
from .losses import LossTerms, ae_loss, reparameterize, vae_loss, vae_percep_loss, vae_reg_loss
from .networks import ArchConfig, build_model, he_init

log = logging.getLogger(__name__)

MODEL_KINDS = ("ae", "vae", "vae_percep", "vae_reg")
DATASET_KIND = {"ae": "triples", "vae": "maps", "vae_percep": "maps", "vae_reg": "pairs"}
HISTORY_COLUMNS = ("epoch", "total", "recon", "kld", "percep", "reg")


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, what: str = "loss"):
        super().__init__(f"non-finite {what} at epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class NormBounds:
    """Dataset-global velocity bounds used to scale maps into [0, 1]."""

    vmin: float
    vmax: float

    @classmethod
    def from_maps(cls, maps: np.ndarray) -> "NormBounds":
        return cls(float(np.min(maps)), float(np.max(maps)))

    def normalize(self, v):
        return (v - self.vmin) / (self.vmax - self.vmin)

    def denormalize(self, x):
        return x * (self.vmax - self.vmin) + self.vmin


@dataclass(frozen=True)
class GenHyper:
    epochs: int = 100
    batch_size: int = 32
    lr: float = 1e-4
    gamma: float = 1e2
    layers: str = "D"
    seed: int = 0
    arch: ArchConfig = ArchConfig()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["arch"] = self.arch.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GenHyper":
        d = dict(d)
        d["arch"] = ArchConfig.from_dict(d["arch"])
        return cls(**d)


@dataclass
class GenDataset:
    """Normalized training tensors.

    ``triples``: (x_first, x_last, t, target); ``maps``: (x,);
    ``pairs``: (x_t1, x_t2) with t1 = t2 + 10.
    """

    kind: str
    tensors: tuple[torch.Tensor, ...]
    bounds: NormBounds

    def __len__(self) -> int:
        return len(self.tensors[0])


def make_dataset(model_kind: str, scenarios: Sequence[LeakageScenario], bounds: NormBounds | None = None
                 ) -> GenDataset:
    if model_kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {model_kind!r}")
    if not scenarios:
        raise ValueError("no training scenarios")
    vel = np.stack([s.velocities for s in scenarios]).astype(np.float64)
    bounds = bounds or NormBounds.from_maps(vel)
    x = torch.as_tensor(bounds.normalize(vel), dtype=torch.float32)  # (S, 20, H, W)
    kind = DATASET_KIND[model_kind]
    S, T = x.shape[:2]
    if kind == "triples":
        first = x[:, :1].expand(-1, T, -1, -1).reshape(S * T, *x.shape[2:])
        last = x[:, -1:].expand(-1, T, -1, -1).reshape(S * T, *x.shape[2:])
        t = torch.tensor(YEARS[:T], dtype=torch.float32).repeat(S)
        tensors = (first.contiguous(), last.contiguous(), t, x.reshape(S * T, *x.shape[2:]))
    elif kind == "maps":
        tensors = (x.reshape(S * T, *x.shape[2:]),)
    else:
        tensors = (x[:, 1:].reshape(-1, *x.shape[2:]), x[:, :-1].reshape(-1, *x.shape[2:]))
    return GenDataset(kind, tensors, bounds)


def batch_loss(model: nn.Module, model_kind: str, batch: Sequence[torch.Tensor], hyper: GenHyper,
               eps_gen: torch.Generator | None = None, extractor: FeatureExtractor | None = None) -> LossTerms:
    """Loss of one batch; ``eps_gen=None`` decodes posterior means (no sampling)."""

    def encode_decode(x):
        mu, log_var = model.encode(x)
        z = mu
        if eps_gen is not None:
            z = reparameterize(mu, log_var, torch.randn(mu.shape, generator=eps_gen, dtype=mu.dtype))
        return model.decode(z), mu, log_var

    if model_kind == "ae":
        first, last, t, target = batch
        loss = ae_loss(model(first, last, t), target)
        return LossTerms(loss, loss)
    if model_kind in ("vae", "vae_percep"):
        (x,) = batch
        x_hat, mu, log_var = encode_decode(x)
        if model_kind == "vae":
            return vae_loss(x_hat, x, mu, log_var)
        return vae_percep_loss(x_hat, x, mu, log_var, layers=hyper.layers, extractor=extractor)
    x1, x2 = batch
    n = len(x1)
    x_hat, mu, log_var = encode_decode(torch.cat([x1, x2]))
    return vae_reg_loss(x1, x2, x_hat[:n], x_hat[n:], mu, log_var, gamma=hyper.gamma)


@dataclass
class GeneratorCheckpoint:
    model_kind: str
    model: nn.Module
    bounds: NormBounds
    hyper: GenHyper
    epoch: int = 0
    history: list[dict] = field(default_factory=list)

    @property
    def arch(self) -> ArchConfig:
        return self.model.arch

    def _to_tensor(self, maps) -> torch.Tensor:
        return torch.as_tensor(self.bounds.normalize(np.asarray(maps, dtype=np.float64)), dtype=torch.float32)

    @torch.no_grad()
    def encode(self, maps) -> torch.Tensor:
        """Posterior means for physical-unit maps (VAE family only)."""
        self._require_vae()
        x = self._to_tensor(maps)
        return self.model.encode(x if x.dim() == 3 else x[None])[0]

    def _to_physical(self, out: torch.Tensor) -> np.ndarray:
        # generated maps never leave the velocity range seen in training
        return self.bounds.denormalize(np.clip(out.double().numpy(), 0.0, 1.0))

    @torch.no_grad()
    def decode(self, z: torch.Tensor) -> np.ndarray:
        self._require_vae()
        return self._to_physical(self.model.decode(z))

    def reconstruct(self, maps) -> np.ndarray:
        """Deterministic reconstruction (z = mu) in physical units."""
        return self.decode(self.encode(maps))

    @torch.no_grad()
    def predict_at(self, x_first, x_last, years) -> np.ndarray:
        if self.model_kind != "ae":
            raise ValueError("predict_at needs an autoencoder checkpoint")
        years = np.atleast_1d(np.asarray(years, dtype=np.float64))
        first = self._to_tensor(x_first)
        last = self._to_tensor(x_last)
        if first.dim() == 2:
            first, last = first.expand(len(years), -1, -1), last.expand(len(years), -1, -1)
        return self._to_physical(self.model(first, last, torch.as_tensor(years, dtype=torch.float32)))

    def predict_scenario(self, scenario: LeakageScenario) -> np.ndarray:
        """Model output for every year of a scenario, physical units."""
        if self.model_kind == "ae":
            return self.predict_at(scenario.velocities[0], scenario.velocities[-1], YEARS[: len(scenario.velocities)])
        return self.reconstruct(scenario.velocities)

    def _require_vae(self):
        if self.model_kind == "ae":
            raise ValueError("latent operations need a VAE-family checkpoint")

    def save(self, directory: str | Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        save_weights(directory / "weights.bin",
                     {k: v.detach().cpu().numpy() for k, v in self.model.state_dict().items()})
        write_json(directory / "header.json", {
            "kind": "generator",
            "model_kind": self.model_kind,
            "bounds": [self.bounds.vmin, self.bounds.vmax],
            "hyper": self.hyper.to_dict(),
            "epoch": self.epoch,
        })
        write_history_csv(directory / "loss_history.csv", self.history)
        return directory

    @classmethod
    def load(cls, directory: str | Path) -> "GeneratorCheckpoint":
        directory = Path(directory)
        header = json.loads((directory / "header.json").read_text())
        if header.get("kind") != "generator":
            raise ValueError(f"{directory} is not a generator checkpoint")
        hyper = GenHyper.from_dict(header["hyper"])
        model = build_model(header["model_kind"], hyper.arch)
        arrays = load_weights(directory / "weights.bin")
        model.load_state_dict({k: torch.from_numpy(v) for k, v in arrays.items()})
        model.eval()
        return cls(header["model_kind"], model, NormBounds(*header["bounds"]), hyper, header["epoch"],
                   read_history_csv(directory / "loss_history.csv"))


def write_history_csv(path: str | Path, history: Sequence[dict]) -> Path:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HISTORY_COLUMNS)
        for row in history:
            writer.writerow([row["epoch"]] + [repr(row[c]) if c in row else "" for c in HISTORY_COLUMNS[1:]])
    return Path(path)


def read_history_csv(path: str | Path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            row = {"epoch": int(rec["epoch"])}
            row.update({c: float(rec[c]) for c in HISTORY_COLUMNS[1:] if rec.get(c)})
            rows.append(row)
    return rows


def train_generative(model_kind: str, train_set: Sequence[LeakageScenario] | GenDataset,
                     hyper: GenHyper = GenHyper(), extractor: FeatureExtractor | None = None,
                     bounds: NormBounds | None = None) -> GeneratorCheckpoint:
    """Adam training with He initialization; deterministic for a given seed."""
    if model_kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {model_kind!r}")
    data = train_set if isinstance(train_set, GenDataset) else make_dataset(model_kind, train_set, bounds)
    if data.kind != DATASET_KIND[model_kind]:
        raise ValueError(f"model kind {model_kind!r} needs {DATASET_KIND[model_kind]} batches, got {data.kind}")
    if hyper.epochs < 1 or hyper.batch_size < 1:
        raise ValueError("epochs and batch_size must be >= 1")

    torch.manual_seed(hyper.seed)
    model = build_model(model_kind, hyper.arch)
    he_init(model)
    opt = torch.optim.Adam(model.parameters(), lr=hyper.lr)
    shuffle_gen = torch.Generator().manual_seed(hyper.seed + 1)
    eps_gen = torch.Generator().manual_seed(hyper.seed + 2)
    n = len(data)
    history = []
    for epoch in range(1, hyper.epochs + 1):
        model.train()
        order = torch.randperm(n, generator=shuffle_gen)
        sums: dict[str, float] = {}
        for start in range(0, n, hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            batch = [t[idx] for t in data.tensors]
            terms = batch_loss(model, model_kind, batch, hyper,
                               None if model_kind == "ae" else eps_gen, extractor)
            if not torch.isfinite(terms.total):
                raise TrainingDiverged(epoch)
            opt.zero_grad()
            terms.total.backward()
            opt.step()
            # AE loss is a batch mean, the VAE losses are batch sums
            weight = len(idx) if model_kind == "ae" else 1.0
            for k, v in terms.as_floats().items():
                sums[k] = sums.get(k, 0.0) + weight * v
        row = {"epoch": epoch, **{k: v / n for k, v in sums.items()}}
        if not all(math.isfinite(v) for v in row.values()):
            raise TrainingDiverged(epoch)
        history.append(row)
        log.info("%s epoch %d/%d total=%.6g", model_kind, epoch, hyper.epochs, row["total"])
    model.eval()
    return GeneratorCheckpoint(model_kind, model, data.bounds, hyper, hyper.epochs, history)
