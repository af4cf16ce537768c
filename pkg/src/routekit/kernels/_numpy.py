"""Pure-NumPy implementations of the distance kernels.

Accumulation runs coordinate by coordinate in index order, the same order
the compiled kernels use, so the two backends agree bitwise and ties break
identically whichever one is active.
"""

import numpy as np


def pairwise_sq_dists(x, y):
    # Differences are formed explicitly instead of expanding the square so
    # results cannot go negative and ties stay exact.
    n, m = x.shape[0], y.shape[0]
    d = x.shape[1]
    out = np.empty((n, m), dtype=np.float64)
    step = max(1, (1 << 22) // max(m, 1))
    for start in range(0, n, step):
        stop = min(start + step, n)
        acc = np.zeros((stop - start, m), dtype=np.float64)
        for t in range(d):
            diff = x[start:stop, t, None] - y[None, :, t]
            acc += diff * diff
        out[start:stop] = acc
    return out


def nearest_centroid(x, c):
    d2 = pairwise_sq_dists(x, c)
    idx = np.argmin(d2, axis=1)  # first minimum wins, so ties go to the lowest index
    best = np.take_along_axis(d2, idx[:, None], axis=1)[:, 0]
    return idx.astype(np.int64), best
