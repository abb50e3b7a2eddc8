"""Recurrent sequence-to-sequence autoencoders as unsupervised audio feature learners.

The pipeline turns WAV files into clipped, normalised log-Mel spectrograms,
trains a recurrent autoencoder (optionally with additive attention) on them,
reads fixed-length representations out of the trained network and scores
them with a linear SVR ranked by Spearman's rho.
"""

from .autoencoder import ConfigError, ModelSpec
from .dsp import SpectrogramConfig, compute_spectrogram
from .features import FeatureTable, extract_features, fuse_tables
from .modeling import spearman_rho, svr_fit
from .training import TrainConfig, train_autoencoder

__all__ = [
    "ConfigError", "ModelSpec", "SpectrogramConfig", "compute_spectrogram", "FeatureTable",
    "extract_features", "fuse_tables", "spearman_rho", "svr_fit", "TrainConfig", "train_autoencoder",
]
__version__ = "0.1.0"
