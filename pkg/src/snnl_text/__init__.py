"""Disentangled text representations with the annealed soft nearest neighbor loss."""

from .clustering import KMeans, PCA, kmeans, pca_project
from .data import EmbeddedDataset, MinMaxScaler, SentenceEmbedder
from .models import SNNLAutoencoder, SNNLClassifier, TrainConfig
from .snnl import TemperatureSchedule, annealing_temperature, snnl_forward, snnl_gradient

__all__ = [
    "EmbeddedDataset",
    "KMeans",
    "MinMaxScaler",
    "PCA",
    "SNNLAutoencoder",
    "SNNLClassifier",
    "SentenceEmbedder",
    "TemperatureSchedule",
    "TrainConfig",
    "annealing_temperature",
    "kmeans",
    "pca_project",
    "snnl_forward",
    "snnl_gradient",
]

__version__ = "0.1.0"
