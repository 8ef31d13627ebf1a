"""Convolutional encoder/decoder pairs for the generative augmenters."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import torch
from torch import nn
from torch.nn import functional as F

LEAK = 0.2


@dataclass(frozen=True)
class ArchConfig:
    """Shape of the encoder/decoder.  The decoder mirrors ``channels``."""

    height: int = 64
    width: int = 64
    channels: tuple[int, ...] = (16, 32, 64, 128)
    latent_dim: int = 64

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ArchConfig":
        return cls(int(d["height"]), int(d["width"]), tuple(int(c) for c in d["channels"]), int(d["latent_dim"]))

    @property
    def bottleneck_hw(self) -> tuple[int, int]:
        n = len(self.channels)
        return math.ceil(self.height / 2**n), math.ceil(self.width / 2**n)


def he_init(module: nn.Module) -> None:
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
            nn.init.kaiming_normal_(m.weight, a=LEAK, nonlinearity="leaky_relu")
            if m.bias is not None:
                nn.init.zeros_(m.bias)


class ConvEncoder(nn.Module):
    def __init__(self, arch: ArchConfig, in_channels: int, out_features: int):
        super().__init__()
        chans = (in_channels,) + tuple(arch.channels)
        self.convs = nn.ModuleList(
            nn.Conv2d(chans[i], chans[i + 1], 3, stride=2, padding=1) for i in range(len(arch.channels))
        )
        h, w = arch.bottleneck_hw
        self.head = nn.Linear(arch.channels[-1] * h * w, out_features)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for conv in self.convs:
            x = F.leaky_relu(conv(x), LEAK)
        return self.head(x.flatten(1))


class ConvDecoder(nn.Module):
    """Dense layer to the bottleneck grid, then nearest-upsample + 3x3 conv blocks."""

    def __init__(self, arch: ArchConfig):
        super().__init__()
        self.arch = arch
        chans = tuple(reversed(arch.channels))
        h, w = arch.bottleneck_hw
        self.fc = nn.Linear(arch.latent_dim, chans[0] * h * w)
        outs = chans[1:] + (chans[-1],)
        self.convs = nn.ModuleList(nn.Conv2d(c_in, c_out, 3, padding=1) for c_in, c_out in zip(chans, outs))
        self.out = nn.Conv2d(outs[-1], 1, 3, padding=1)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        h, w = self.arch.bottleneck_hw
        x = F.leaky_relu(self.fc(z), LEAK).view(z.shape[0], -1, h, w)
        for conv in self.convs:
            x = F.leaky_relu(conv(F.interpolate(x, scale_factor=2, mode="nearest")), LEAK)
        x = self.out(x)
        return x[:, 0, : self.arch.height, : self.arch.width]


def temporal_channel(t: float, height: int, width: int) -> torch.Tensor:
    """Constant matrix holding the normalized year ``t / 200``."""
    if not 10 <= t <= 200:
        raise ValueError(f"year must lie in [10, 200], got {t}")
    return torch.full((height, width), t / 200.0, dtype=torch.get_default_dtype())


class AutoEncoder(nn.Module):
    """Maps (first map, last map, year) of one scenario to the map at that year."""

    kind = "ae"

    def __init__(self, arch: ArchConfig = ArchConfig()):
        super().__init__()
        self.arch = arch
        self.encoder = ConvEncoder(arch, 3, arch.latent_dim)
        self.decoder = ConvDecoder(arch)

    def forward(self, x_first: torch.Tensor, x_last: torch.Tensor, t) -> torch.Tensor:
        if x_first.shape != x_last.shape:
            raise ValueError(f"map dims differ: {tuple(x_first.shape)} vs {tuple(x_last.shape)}")
        if x_first.dim() == 2:
            return self.forward(x_first[None], x_last[None], t)[0]
        if x_first.shape[-2:] != (self.arch.height, self.arch.width):
            raise ValueError(f"expected {self.arch.height}x{self.arch.width} maps, got {tuple(x_first.shape[-2:])}")
        t = torch.as_tensor(t, dtype=x_first.dtype).reshape(-1)
        if torch.any(t < 10) or torch.any(t > 200):
            raise ValueError("year must lie in [10, 200]")
        t_map = (t / 200.0).view(-1, 1, 1).expand_as(x_first)
        z = self.encoder(torch.stack([x_first, x_last, t_map], dim=1))
        return self.decoder(z)


class VAE(nn.Module):
    kind = "vae"

    def __init__(self, arch: ArchConfig = ArchConfig()):
        super().__init__()
        self.arch = arch
        self.encoder = ConvEncoder(arch, 1, 2 * arch.latent_dim)
        self.decoder = ConvDecoder(arch)

    def encode(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if x.shape[-2:] != (self.arch.height, self.arch.width):
            raise ValueError(f"expected {self.arch.height}x{self.arch.width} maps, got {tuple(x.shape[-2:])}")
        h = self.encoder(x[:, None])
        return h[:, : self.arch.latent_dim], h[:, self.arch.latent_dim:]

    def decode(self, z: torch.Tensor) -> torch.Tensor:
        return self.decoder(z)

    def forward(self, x: torch.Tensor, eps: torch.Tensor | None = None):
        """Returns ``(x_hat, mu, log_var, z)``; ``eps=None`` decodes the mean."""
        from .losses import reparameterize

        mu, log_var = self.encode(x)
        z = mu if eps is None else reparameterize(mu, log_var, eps)
        return self.decode(z), mu, log_var, z


def build_model(model_kind: str, arch: ArchConfig) -> nn.Module:
    if model_kind == "ae":
        return AutoEncoder(arch)
    if model_kind in ("vae", "vae_percep", "vae_reg"):
        return VAE(arch)
    raise ValueError(f"unknown model kind {model_kind!r}")
