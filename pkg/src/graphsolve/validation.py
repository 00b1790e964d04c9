"""Input validation helpers shared by the vector-facing estimators."""

from __future__ import annotations

import numpy as np

UNIT_NORM_TOLERANCE = 1e-6


def as_vector(value, dimension: int | None = None, name: str = "vector") -> np.ndarray:
    """Coerce to a finite 1-D float64 array, optionally checking its length."""
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if dimension is not None and arr.shape[0] != dimension:
        raise ValueError(f"{name} has dimension {arr.shape[0]}, expected {dimension}")
    return arr


def ensure_unit(vector: np.ndarray, name: str = "vector") -> np.ndarray:
    """Check unit Euclidean norm within UNIT_NORM_TOLERANCE."""
    norm = float(np.linalg.norm(vector))
    if abs(norm - 1.0) > UNIT_NORM_TOLERANCE:
        raise ValueError(f"{name} is not normalized (norm={norm!r})")
    return vector
