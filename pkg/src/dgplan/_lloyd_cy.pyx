# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled Lloyd-iteration kernel.

Semantics match dgplan._lloyd_py.lloyd_iterate bit for bit: squared
distances accumulate feature-by-feature in index order, ties break to the
lowest cluster index, and cluster sums accumulate in row order.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def lloyd_iterate(double[:, ::1] z, double[:, ::1] centroids):
    """Assign every row to its nearest centroid and accumulate cluster sums.

    Returns (labels, min_sqdist, sums, counts); wcss is min_sqdist.sum().
    """
    cdef Py_ssize_t n = z.shape[0]
    cdef Py_ssize_t f = z.shape[1]
    cdef Py_ssize_t k = centroids.shape[0]

    labels_arr = np.empty(n, dtype=np.int64)
    dist_arr = np.empty(n, dtype=np.float64)
    sums_arr = np.zeros((k, f), dtype=np.float64)
    counts_arr = np.zeros(k, dtype=np.int64)

    cdef cnp.int64_t[::1] labels = labels_arr
    cdef double[::1] min_sqdist = dist_arr
    cdef double[:, ::1] sums = sums_arr
    cdef cnp.int64_t[::1] counts = counts_arr

    cdef Py_ssize_t i, c, j, best
    cdef double d, diff, bestd

    for i in range(n):
        best = 0
        bestd = 0.0
        for j in range(f):
            diff = z[i, j] - centroids[0, j]
            bestd += diff * diff
        for c in range(1, k):
            d = 0.0
            for j in range(f):
                diff = z[i, j] - centroids[c, j]
                d += diff * diff
                if d >= bestd:
                    break
            if d < bestd:
                bestd = d
                best = c
        labels[i] = best
        min_sqdist[i] = bestd
        counts[best] += 1
        for j in range(f):
            sums[best, j] += z[i, j]

    return labels_arr, dist_arr, sums_arr, counts_arr
