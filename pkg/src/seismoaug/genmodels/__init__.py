"""Generative augmenters: networks, losses, training and sample generation."""
from .augment import (AugmentationSet, SyntheticSample, generate_augmentation, latent_interpolate,
                      linear_interp_baseline)
from .losses import (LossTerms, ae_loss, kld, perception_gram, perception_loss, perception_weight,
                     reparameterize, temporal_reg, vae_loss, vae_percep_loss, vae_reg_loss)
from .networks import VAE, ArchConfig, AutoEncoder, build_model, temporal_channel
from .training import (MODEL_KINDS, GenDataset, GeneratorCheckpoint, GenHyper, NormBounds, TrainingDiverged,
                       make_dataset, train_generative)

__all__ = [
    "AugmentationSet", "SyntheticSample", "generate_augmentation", "latent_interpolate", "linear_interp_baseline",
    "LossTerms", "ae_loss", "kld", "perception_gram", "perception_loss", "perception_weight", "reparameterize",
    "temporal_reg", "vae_loss", "vae_percep_loss", "vae_reg_loss",
    "VAE", "ArchConfig", "AutoEncoder", "build_model", "temporal_channel",
    "MODEL_KINDS", "GenDataset", "GeneratorCheckpoint", "GenHyper", "NormBounds", "TrainingDiverged",
    "make_dataset", "train_generative",
]
