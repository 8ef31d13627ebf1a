"""Training objectives for the four augmenters.

Sum-reduced losses (VAE family) sum over pixels, latent dimensions and batch;
the autoencoder loss is a per-batch mean.  Composite losses return a
:class:`LossTerms` whose ``total`` is literally the sum of the reported parts.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import torch

from ..featureext import FeatureExtractor, default_extractor, layer_selection


@dataclass
class LossTerms:
    total: torch.Tensor
    recon: torch.Tensor
    kld: torch.Tensor | None = None
    percep: torch.Tensor | None = None
    reg: torch.Tensor | None = None

    def as_floats(self) -> dict[str, float]:
        return {k: float(v.detach()) for k, v in vars(self).items() if v is not None}


def _nonempty(x: torch.Tensor) -> None:
    if x.numel() == 0 or x.shape[0] == 0:
        raise ValueError("empty batch")


def ae_loss(x_hat: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
    """Mean squared error over batch and pixels."""
    _nonempty(x)
    return torch.mean((x - x_hat) ** 2)


def reparameterize(mu: torch.Tensor, log_var: torch.Tensor, eps: torch.Tensor) -> torch.Tensor:
    return mu + torch.exp(0.5 * log_var) * eps


def kld(mu: torch.Tensor, log_var: torch.Tensor) -> torch.Tensor:
    """KL(N(mu, exp(log_var)) || N(0, I)), summed over all entries."""
    return 0.5 * torch.sum(mu**2 + torch.exp(log_var) - 1.0 - log_var)


def recon_sse(x_hat: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
    _nonempty(x)
    return torch.sum((x - x_hat) ** 2)


def vae_loss(x_hat, x, mu, log_var) -> LossTerms:
    recon = recon_sse(x_hat, x)
    div = kld(mu, log_var)
    return LossTerms(recon + div, recon, div)


def perception_gram(features: torch.Tensor) -> torch.Tensor:
    """Gram matrix of vectorized filters: (..., N, h, w) -> (..., N, N)."""
    flat = features.flatten(-2)
    return flat @ flat.transpose(-1, -2)


def perception_weight(n_filters: int, size: int) -> float:
    return 1.0 / (4.0 * n_filters**2 * size**2)


def perception_loss(x: torch.Tensor, x_hat: torch.Tensor, layers: str | Sequence[str] = "D",
                    extractor: FeatureExtractor | None = None) -> torch.Tensor:
    """Weighted squared Gram mismatch, summed over layers, filters and batch."""
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    extractor = extractor or default_extractor()
    names = layer_selection(layers) if isinstance(layers, str) else tuple(layers)
    with torch.no_grad():
        target = extractor(x, names)
    generated = extractor(x_hat, names)
    total = x.new_zeros(())
    for g_feat, a_feat in zip(target, generated):
        n_filters, size = g_feat.shape[1], g_feat.shape[2] * g_feat.shape[3]
        diff = perception_gram(g_feat) - perception_gram(a_feat)
        total = total + perception_weight(n_filters, size) * torch.sum(diff**2)
    return total


def vae_percep_loss(x_hat, x, mu, log_var, layers="D", extractor=None) -> LossTerms:
    recon = recon_sse(x_hat, x)
    div = kld(mu, log_var)
    per = perception_loss(x, x_hat, layers, extractor)
    return LossTerms(recon + div + per, recon, div, percep=per)


def temporal_reg(x_t1, x_t2, x_hat_t1, x_hat_t2, years: tuple[int, int] | None = None) -> torch.Tensor:
    """L1 mismatch between true and generated consecutive-year differences.

    ``years=(t1, t2)`` is checked for adjacency (``t1 = t2 + 10``).
    """
    if years is not None:
        t1, t2 = years
        if t1 - t2 != 10:
            raise ValueError(f"years must be adjacent with t1 > t2, got {years}")
    return torch.sum(torch.abs((x_t1 - x_t2) - (x_hat_t1 - x_hat_t2)))


def vae_reg_loss(x_t1, x_t2, x_hat_t1, x_hat_t2, mu, log_var, gamma: float = 1e2) -> LossTerms:
    """``mu``/``log_var`` cover both maps of each pair (stacked along the batch)."""
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    recon = recon_sse(x_hat_t1, x_t1) + recon_sse(x_hat_t2, x_t2)
    div = kld(mu, log_var)
    reg = temporal_reg(x_t1, x_t2, x_hat_t1, x_hat_t2)
    return LossTerms(recon + div + gamma * reg, recon, div, reg=reg)
