"""Distance kernels with a compiled core and a pure-NumPy fallback.

The compiled extension is optional: if it failed to build, or if the
environment variable ROUTEKIT_PURE_PYTHON is set to "1", the NumPy
implementation is used instead. ``BACKEND`` records which one is active.
Both backends break distance ties toward the lowest index.
"""

from __future__ import annotations

import os

import numpy as np

from . import _numpy as _np_impl

if os.environ.get("ROUTEKIT_PURE_PYTHON") == "1":
    _impl = _np_impl
    BACKEND = "numpy"
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _np_impl
        BACKEND = "numpy"


def _as_points(a, name: str) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=np.float64)
    if out.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array, got ndim={out.ndim}")
    return out


def pairwise_sq_dists(x, y) -> np.ndarray:
    """Squared Euclidean distances between two point sets, shape (n, m)."""
    x = _as_points(x, "x")
    y = _as_points(y, "y")
    if x.shape[1] != y.shape[1]:
        raise ValueError("dimension mismatch between point sets")
    return _impl.pairwise_sq_dists(x, y)


def nearest_centroid(x, c) -> tuple[np.ndarray, np.ndarray]:
    """Index of the nearest centroid per point plus the squared distance."""
    x = _as_points(x, "x")
    c = _as_points(c, "c")
    if x.shape[1] != c.shape[1]:
        raise ValueError("dimension mismatch between points and centroids")
    if c.shape[0] == 0:
        raise ValueError("need at least one centroid")
    return _impl.nearest_centroid(x, c)
