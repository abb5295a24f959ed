"""Memory-mapped gridded time-series store and precipitation forecast
evaluation harness."""

from .grid import Field, GridSpec, downscale_maxpool, latitude_weights, make_grid, regrid_bilinear
from .metrics import class_rmse, lw_rmse
from .normalize import VarStats, global_stats, standardize_global, standardize_las, standardize_lalas
from .sampler import (
    ClassBinning,
    PartitionSpec,
    SampleSpec,
    build_sample,
    class_of,
    iter_indices,
    lead_onehot,
    validate_partition,
    window_offsets,
)
from .store import Datastore, StoreHeader, accumulate_time, convert, open_store

__version__ = "0.1.0"

__all__ = [
    "ClassBinning",
    "Datastore",
    "Field",
    "GridSpec",
    "PartitionSpec",
    "SampleSpec",
    "StoreHeader",
    "VarStats",
    "accumulate_time",
    "build_sample",
    "class_of",
    "class_rmse",
    "convert",
    "downscale_maxpool",
    "global_stats",
    "iter_indices",
    "latitude_weights",
    "lead_onehot",
    "lw_rmse",
    "make_grid",
    "open_store",
    "regrid_bilinear",
    "standardize_global",
    "standardize_las",
    "standardize_lalas",
    "validate_partition",
    "window_offsets",
]
