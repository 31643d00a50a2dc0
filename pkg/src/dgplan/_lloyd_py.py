"""Pure-numpy Lloyd-iteration kernel (fallback when the compiled one is absent).

Distances are accumulated feature-by-feature in index order and ties break
to the lowest cluster index, exactly like the compiled kernel, so both
backends produce identical assignments for identical inputs.
"""

from __future__ import annotations

import numpy as np

# Cap the (chunk x k x f) scratch array at ~32 MB.
_CHUNK_BYTES = 32 * 1024 * 1024


def lloyd_iterate(z: np.ndarray, centroids: np.ndarray):
    """Assign every row to its nearest centroid and accumulate cluster sums.

    Returns (labels, min_sqdist, sums, counts); wcss is min_sqdist.sum().
    """
    n, f = z.shape
    k = centroids.shape[0]
    labels = np.empty(n, dtype=np.int64)
    min_sqdist = np.empty(n, dtype=np.float64)
    chunk = max(1, _CHUNK_BYTES // (max(k, 1) * f * 8))
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        diff = z[lo:hi, None, :] - centroids[None, :, :]
        d = (diff * diff).sum(axis=2)
        labels[lo:hi] = np.argmin(d, axis=1)       # first minimum = lowest index
        min_sqdist[lo:hi] = d[np.arange(hi - lo), labels[lo:hi]]
    counts = np.bincount(labels, minlength=k).astype(np.int64)
    sums = np.zeros((k, f), dtype=np.float64)
    np.add.at(sums, labels, z)
    return labels, min_sqdist, sums, counts
