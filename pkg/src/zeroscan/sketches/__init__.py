"""Mergeable sketches (Theta distinct counts, KLL quantiles) and their sidecar files."""

from .hashing import DEFAULT_SEED, hash_value
from .kll import RANK_EPSILON, KllSketch, kll_merge, kll_merge_all, kll_quantile, kll_rank, kll_update
from .sidecar import BlobType, SketchSidecar, load_kll, load_theta, sidecar_read, sidecar_read_blob, sidecar_write
from .theta import MAX_THETA, ThetaSketch, theta_union, theta_update

# relative error bound for Theta estimates at nominal_k = 4096
THETA_RELATIVE_ERROR = 0.03

__all__ = [
    "DEFAULT_SEED",
    "MAX_THETA",
    "RANK_EPSILON",
    "THETA_RELATIVE_ERROR",
    "BlobType",
    "KllSketch",
    "SketchSidecar",
    "ThetaSketch",
    "hash_value",
    "kll_merge",
    "kll_merge_all",
    "kll_quantile",
    "kll_rank",
    "kll_update",
    "load_kll",
    "load_theta",
    "sidecar_read",
    "sidecar_read_blob",
    "sidecar_write",
    "theta_union",
    "theta_update",
]
