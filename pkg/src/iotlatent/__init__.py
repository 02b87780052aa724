"""Latent-space IoT botnet detection: VAE and ViT encoders feeding five deep classifiers."""

__version__ = "0.1.0"
