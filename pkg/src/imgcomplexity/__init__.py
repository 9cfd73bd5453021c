"""Complexity measures for image datasets: entropies, intrinsic dimensionality, embeddings."""

from .embed import EmbedConfig, embed_dataset
from .entropy import EntropyConfig, analyze_image
from .ingest import load_grayscale, scan_dataset
from .intdim import build_features, estimate_id, knn_table, mle_id_dataset
from .report import DatasetSummary, NormalFit, fit_normal, rank_datasets

__all__ = [
    "EmbedConfig", "EntropyConfig", "DatasetSummary", "NormalFit",
    "analyze_image", "build_features", "embed_dataset", "estimate_id", "fit_normal",
    "knn_table", "load_grayscale", "mle_id_dataset", "rank_datasets", "scan_dataset",
]
