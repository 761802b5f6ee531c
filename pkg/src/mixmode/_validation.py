"""Small input-validation helpers shared across the package."""

from __future__ import annotations

import numpy as np


def ensure_rng(seed: int | np.random.Generator | None) -> np.random.Generator:
    """Return a numpy Generator, passing existing generators through."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def check_feature_vector(features, dim: int) -> np.ndarray:
    """Validate and return a finite float vector of length ``dim``."""
    phi = np.asarray(features, dtype=np.float64)
    if phi.shape != (dim,):
        raise ValueError(f"expected feature vector of shape ({dim},), got {phi.shape}")
    if not np.all(np.isfinite(phi)):
        raise ValueError("feature vector contains non-finite entries")
    return phi


def check_equal_lengths(**named_sequences) -> int:
    """Check all sequences share one length and return it."""
    lengths = {name: len(seq) for name, seq in named_sequences.items()}
    unique = set(lengths.values())
    if len(unique) != 1:
        raise ValueError(f"length mismatch: {lengths}")
    return unique.pop()
