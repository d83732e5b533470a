"""nifkit - neural implicit flow for mesh-agnostic reduction of spatio-temporal data."""

__version__ = "0.1.0"

from . import (
    baselines,
    checkpoint,
    cli,
    config,
    datagen,
    flatconfig,
    models,
    nets,
    nif,
    numerics,
    pointcloud,
    query,
    reduce,
    train,
)

__all__ = [
    "baselines",
    "checkpoint",
    "cli",
    "config",
    "datagen",
    "flatconfig",
    "models",
    "nets",
    "nif",
    "numerics",
    "pointcloud",
    "query",
    "reduce",
    "train",
]
