"""K-means on standardized operating-point data.

Lloyd's algorithm with k-means++ seeding, a fixed number of restarts, and
deterministic behavior for a given seed. The per-iteration hot loop
(assignment + accumulation) runs in a compiled extension when available
and falls back to a numpy implementation with identical semantics; see
``active_kernel``.

Properties relied on downstream:

* every returned centroid is the exact mean of its assigned rows, so the
  size-weighted centroid average equals the global data mean;
* no empty clusters: an emptied cluster is re-seeded with the point
  farthest from its current centroid;
* assignment ties break to the lowest cluster index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _lloyd_py

try:  # compiled kernel is optional
    from . import _lloyd_cy

    _HAVE_CY = True
except ImportError:  # pragma: no cover - depends on build environment
    _lloyd_cy = None
    _HAVE_CY = False

DEFAULT_N_INIT = 10
DEFAULT_MAX_ITER = 300
DEFAULT_TOL = 1e-6


class ClusteringError(Exception):
    pass


def available_kernels() -> tuple[str, ...]:
    return ("cython", "numpy") if _HAVE_CY else ("numpy",)


def active_kernel() -> str:
    """Kernel used by default: compiled when the extension imported."""
    return "cython" if _HAVE_CY else "numpy"


def _iterate_fn(kernel: str):
    if kernel == "numpy":
        return _lloyd_py.lloyd_iterate
    if kernel == "cython":
        if not _HAVE_CY:
            raise ClusteringError("compiled kernel requested but not built")
        return _lloyd_cy.lloyd_iterate
    raise ClusteringError(f"unknown kernel {kernel!r}")


@dataclass(frozen=True)
class KMeansResult:
    centroids: np.ndarray  # (k, f)
    labels: np.ndarray     # (n,)
    sizes: np.ndarray      # (k,) int64
    wcss: float            # within-cluster sum of squares
    n_iter: int
    kernel: str


def _kmeanspp_init(z: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding; deterministic for a given generator state."""
    n = z.shape[0]
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = rng.integers(n)
    d2 = ((z - z[chosen[0]]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # all remaining mass coincides with chosen points: spread uniformly
            remaining = np.setdiff1d(np.arange(n), chosen[:i], assume_unique=False)
            chosen[i] = remaining[int(rng.integers(len(remaining)))]
        else:
            r = rng.random() * total
            chosen[i] = int(np.searchsorted(np.cumsum(d2), r, side="right").clip(0, n - 1))
        d2 = np.minimum(d2, ((z - z[chosen[i]]) ** 2).sum(axis=1))
    return z[chosen].copy()


def _repair_empty(z, labels, min_sqdist, sums, counts):
    """Re-seed each empty cluster with the worst-fit point of a non-singleton cluster."""
    empties = np.flatnonzero(counts == 0)
    guard = 0
    while empties.size:
        c = int(empties[0])
        stealable = counts[labels] > 1
        if not stealable.any():
            raise ClusteringError("cannot repair empty cluster: all clusters are singletons")
        d = np.where(stealable, min_sqdist, -np.inf)
        idx = int(np.argmax(d))
        old = int(labels[idx])
        labels[idx] = c
        counts[old] -= 1
        counts[c] += 1
        sums[old] -= z[idx]
        sums[c] += z[idx]
        min_sqdist[idx] = 0.0
        empties = np.flatnonzero(counts == 0)
        guard += 1
        if guard > len(counts) + 1:  # each repair fills one empty for good
            raise ClusteringError("empty-cluster repair did not converge")


def _lloyd_once(z, k, rng, iterate, max_iter, tol):
    centroids = _kmeanspp_init(z, k, rng)
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        labels, min_sqdist, sums, counts = iterate(z, centroids)
        _repair_empty(z, labels, min_sqdist, sums, counts)
        new_centroids = sums / counts[:, None]
        shift2 = ((new_centroids - centroids) ** 2).sum(axis=1).max()
        centroids = new_centroids
        if shift2 <= tol * tol:
            break
    # final pass so centroids are exact means of the returned assignment
    labels, min_sqdist, sums, counts = iterate(z, centroids)
    _repair_empty(z, labels, min_sqdist, sums, counts)
    centroids = sums / counts[:, None]
    wcss = float(((z - centroids[labels]) ** 2).sum())
    return centroids, labels, counts, wcss, n_iter


def kmeans(
    z: np.ndarray,
    k: int,
    seed: int,
    n_init: int = DEFAULT_N_INIT,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    kernel: str | None = None,
) -> KMeansResult:
    """Cluster rows of ``z`` into ``k`` groups, best of ``n_init`` restarts.

    Raises ClusteringError when k exceeds the number of rows or when all
    rows are identical with k > 1 (no meaningful partition exists).
    """
    z = np.ascontiguousarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise ClusteringError("expected a 2-D matrix")
    n = z.shape[0]
    if k < 1:
        raise ClusteringError(f"k must be >= 1, got {k}")
    if k > n:
        raise ClusteringError(f"k={k} exceeds number of rows ({n})")
    if k > 1 and np.ptp(z, axis=0).max() == 0.0:
        raise ClusteringError(f"degenerate data: all rows identical, cannot form k={k} clusters")
    kern = kernel or active_kernel()
    iterate = _iterate_fn(kern)

    if k == n:
        # one point per cluster; Lloyd would be a no-op
        labels = np.arange(n, dtype=np.int64)
        return KMeansResult(
            centroids=z.copy(),
            labels=labels,
            sizes=np.ones(n, dtype=np.int64),
            wcss=0.0,
            n_iter=0,
            kernel=kern,
        )

    ss = np.random.SeedSequence(seed)
    best = None
    for child in ss.spawn(n_init):
        rng = np.random.default_rng(child)
        result = _lloyd_once(z, k, rng, iterate, max_iter, tol)
        if best is None or result[3] < best[3]:
            best = result
    centroids, labels, counts, wcss, n_iter = best
    return KMeansResult(
        centroids=centroids,
        labels=labels,
        sizes=counts,
        wcss=wcss,
        n_iter=n_iter,
        kernel=kern,
    )
