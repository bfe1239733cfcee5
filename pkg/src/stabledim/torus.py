"""Flat-torus coordinate helpers.

Points live in [0,1)^d with per-coordinate wrap-around; distance is the
Euclidean norm of the per-coordinate minimal displacement.
"""

import numpy as np


def wrap(x):
    """Reduce coordinates to [0, 1)."""
    return np.asarray(x, dtype=float) % 1.0


def signed(x):
    """Reduce to the symmetric representative in [-0.5, 0.5)."""
    return (np.asarray(x, dtype=float) + 0.5) % 1.0 - 0.5


def delta(a, b):
    """Minimal displacement a - b on the torus, componentwise in [-0.5, 0.5)."""
    return signed(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))


def dist(a, b):
    """Flat-torus distance; broadcasts over leading axes."""
    return np.linalg.norm(delta(a, b), axis=-1)
