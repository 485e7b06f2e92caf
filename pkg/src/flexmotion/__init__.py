"""FlexMotion: physics-aware motion autoencoding, latent diffusion with
spatial control, synthetic muscle-driven motion data, and evaluation metrics.
"""

__version__ = "0.1.0"
