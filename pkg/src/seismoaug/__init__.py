"""Generative data augmentation for learned seismic inversion of small CO2 leaks.

Subpackages and modules:

- ``datagen``: procedural time-lapse leakage scenarios and leak-mass classes
- ``wavesim``: 2-D acoustic finite-difference modeling of shot gathers
- ``featureext``: fixed-weight feature extractor for the perception loss
- ``genmodels``: autoencoder and VAE augmenters, losses, training, generation
- ``inversion``: gather-to-velocity network
- ``evaluate``: MAE, SSIM, per-year curves, projections, Kz spectra, box plots
- ``pipeline``: configs, cached stages, runs, sweeps and grid searches
"""

__version__ = "0.1.0"
