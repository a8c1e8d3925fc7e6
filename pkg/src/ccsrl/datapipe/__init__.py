"""Trajectory generation, normalization and the dataset container."""
from .dataset import (
    Dataset,
    build_dataset,
    file_digest,
    generate_dataset,
    manifest_path,
    read_dataset,
    sample_schedule,
    simulate_trajectories,
    split,
    write_dataset,
)
from .norm import FAMILIES, NormStats, Normalizer, denormalize, fit_stats, normalize

__all__ = [
    "FAMILIES",
    "Dataset",
    "NormStats",
    "Normalizer",
    "build_dataset",
    "denormalize",
    "file_digest",
    "fit_stats",
    "generate_dataset",
    "manifest_path",
    "normalize",
    "read_dataset",
    "sample_schedule",
    "simulate_trajectories",
    "split",
    "write_dataset",
]
