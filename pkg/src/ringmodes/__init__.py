"""Dynamical-mode recognition for ring-coupled oscillator arrays.

Pipeline: simulate multivariate oscillator time series, embed sliding
windows into a 2-D latent plane with a recurrent variational autoencoder,
estimate the latent distribution on a fixed grid with a Gaussian kernel,
and classify operating modes by the 2-D Wasserstein distance between a
test distribution and a library of benchmark distributions.
"""

__version__ = "0.1.0"

from .synth import RingConfig, TimeSeriesDataset, SequenceWindow, simulate_ring
from .vae import ArchConfig, BiLstmVae, LatentGaussian
from .train import TrainConfig, TrainHistory, train, save_checkpoint, load_checkpoint
from .latent import KdeConfig, GridDistribution, LatentTrajectory, embed_dataset, gkde
from .transport import TransportPlan, WdMatrix, emd_exact, emd_sinkhorn, classify

__all__ = [
    "RingConfig",
    "TimeSeriesDataset",
    "SequenceWindow",
    "simulate_ring",
    "ArchConfig",
    "BiLstmVae",
    "LatentGaussian",
    "TrainConfig",
    "TrainHistory",
    "train",
    "save_checkpoint",
    "load_checkpoint",
    "KdeConfig",
    "GridDistribution",
    "LatentTrajectory",
    "embed_dataset",
    "gkde",
    "TransportPlan",
    "WdMatrix",
    "emd_exact",
    "emd_sinkhorn",
    "classify",
]
