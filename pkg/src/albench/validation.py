"""Input validation helpers shared across the package.

Small check_* functions in the spirit of sklearn's validation utilities:
they either return a canonicalized numpy array or raise ValueError with a
message naming the offending argument.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "check_image",
    "check_mask",
    "check_probability_map",
    "check_embedding_matrix",
    "check_same_shape",
]


def check_image(image, name: str = "image") -> np.ndarray:
    """Validate a channels x H x W image with values in [0, 1]."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"{name} must be 3-d (channels, H, W), got shape {arr.shape}")
    if arr.shape[0] not in (1, 3):
        raise ValueError(f"{name} must have 1 or 3 channels, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(f"{name} values must lie in [0, 1]")
    return arr


def check_mask(mask, name: str = "mask") -> np.ndarray:
    """Validate an H x W binary mask; returns uint8 array of {0, 1}."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-d (H, W), got shape {arr.shape}")
    uniq = np.unique(arr)
    if not np.all(np.isin(uniq, (0, 1))):
        raise ValueError(f"{name} must be binary (0/1), found values {uniq[:5]}")
    return arr.astype(np.uint8)


def check_probability_map(p, clamp: float | None = None, name: str = "p") -> np.ndarray:
    """Validate an H x W probability map, optionally against clamp bounds."""
    arr = np.asarray(p, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-d (H, W), got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    lo, hi = (clamp, 1.0 - clamp) if clamp is not None else (0.0, 1.0)
    if arr.min() < lo or arr.max() > hi:
        raise ValueError(f"{name} values must lie in [{lo}, {hi}]")
    return arr


def check_embedding_matrix(x, dim: int | None = None, name: str = "embeddings") -> np.ndarray:
    """Validate a 2-d float matrix of embedding rows."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-d (n, dim), got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if dim is not None and arr.shape[1] != dim:
        raise ValueError(f"{name} must have dimension {dim}, got {arr.shape[1]}")
    return arr


def check_same_shape(a: np.ndarray, b: np.ndarray, what: str = "arrays") -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch between {what}: {a.shape} vs {b.shape}")
