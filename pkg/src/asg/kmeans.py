"""Deterministic k-means: k-means++ seeding, Lloyd iterations, exhaustive oracle.

All arithmetic runs in float64. Work is split into fixed-size point chunks
whose partial results are merged in chunk order, so the output does not
depend on how many worker threads process the chunks.
"""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, ValidationError

CHUNK_ROWS = 1024
# cap on chunk_rows * centroid_block * d float64 temporaries (~32 MB)
_MAX_TEMP = 1 << 22

MAX_ORACLE_POINTS = 12
MAX_ORACLE_K = 4


class DegenerateSeedingWarning(UserWarning):
    """Fewer distinct points than requested centroids; duplicates were seeded."""


@dataclass(frozen=True)
class KmeansParams:
    k: int
    max_iters: int = 100
    tol: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError(f"k must be >= 1, got {self.k}")
        if self.max_iters < 1:
            raise ValidationError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.tol >= 0:
            raise ValidationError(f"tol must be >= 0, got {self.tol}")
        if not 0 <= self.seed < 2**64:
            raise ValidationError(f"seed must fit in 64 unsigned bits, got {self.seed}")


@dataclass
class Assignments:
    labels: np.ndarray
    objective: float
    # squared distance of every point to its assigned centroid
    sq_dist: np.ndarray = field(repr=False)


def as_points(points) -> np.ndarray:
    x = np.asarray(points, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise ShapeError(f"point set must be (n, d) with n, d >= 1, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise ShapeError("point set contains non-finite values")
    return np.ascontiguousarray(x)


def _chunks(n: int):
    return [(s, min(s + CHUNK_ROWS, n)) for s in range(0, n, CHUNK_ROWS)]


def _map_chunks(fn, n: int, threads: int):
    spans = _chunks(n)
    if threads <= 1 or len(spans) == 1:
        return [fn(a, b) for a, b in spans]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda s: fn(*s), spans))


def _nearest(x: np.ndarray, c: np.ndarray):
    """Nearest centroid per row of ``x`` with exact differences; first index wins ties."""
    n, d = x.shape
    k = c.shape[0]
    block = max(1, _MAX_TEMP // max(1, n * d))
    best = np.full(n, np.inf)
    arg = np.zeros(n, dtype=np.int64)
    for s in range(0, k, block):
        diff = x[:, None, :] - c[None, s:s + block, :]
        dist = np.einsum("nkd,nkd->nk", diff, diff)
        j = np.argmin(dist, axis=1)
        dj = dist[np.arange(n), j]
        # strict < keeps the earlier block on ties
        better = dj < best
        best[better] = dj[better]
        arg[better] = j[better] + s
    return arg, best


def assign(points, centroids, threads: int = 1) -> Assignments:
    x = as_points(points)
    c = as_points(centroids)
    if c.shape[1] != x.shape[1]:
        raise ShapeError(f"dimension mismatch: points d={x.shape[1]}, centroids d={c.shape[1]}")
    parts = _map_chunks(lambda a, b: _nearest(x[a:b], c), x.shape[0], threads)
    labels = np.concatenate([p[0] for p in parts])
    sq = np.concatenate([p[1] for p in parts])
    objective = 0.0
    for _, d2 in parts:
        objective += float(d2.sum())
    return Assignments(labels, objective, sq)


def kmeans_pp_init(points, k: int, seed: int = 0) -> np.ndarray:
    """k-means++ seeding.

    The first centroid is uniform; each further one is drawn with probability
    proportional to the squared distance to the closest centroid chosen so far.
    If every remaining point coincides with a chosen centroid, the rest are
    drawn uniformly and a :class:`DegenerateSeedingWarning` is issued.
    """
    x = as_points(points)
    n = x.shape[0]
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if k > n:
        raise ValidationError(f"k={k} exceeds number of points n={n}")
    rng = np.random.default_rng(seed)
    chosen = [int(rng.integers(n))]
    diff = x - x[chosen[0]]
    closest = np.einsum("nd,nd->n", diff, diff)
    degenerate = False
    for _ in range(1, k):
        total = float(closest.sum())
        if total > 0.0:
            cum = np.cumsum(closest)
            # side="right" never lands on a zero-weight point
            idx = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
            idx = min(idx, n - 1)
        else:
            degenerate = True
            idx = int(rng.integers(n))
        chosen.append(idx)
        diff = x - x[idx]
        np.minimum(closest, np.einsum("nd,nd->n", diff, diff), out=closest)
    if degenerate:
        warnings.warn(
            f"only {len(np.unique(x, axis=0))} distinct points for k={k}; duplicate centroids seeded",
            DegenerateSeedingWarning,
            stacklevel=2,
        )
    return x[chosen].copy()


def _update(x: np.ndarray, labels: np.ndarray, k: int, threads: int):
    d = x.shape[1]

    def partial(a, b):
        lab = labels[a:b]
        sums = np.empty((k, d))
        for j in range(d):
            sums[:, j] = np.bincount(lab, weights=x[a:b, j], minlength=k)
        return sums, np.bincount(lab, minlength=k)

    parts = _map_chunks(partial, x.shape[0], threads)
    sums = np.zeros((k, d))
    counts = np.zeros(k, dtype=np.int64)
    for s, cnt in parts:
        sums += s
        counts += cnt
    return sums, counts


def _repair_empty(x, labels, sq, centroids, counts):
    """Re-seed each empty cluster at the point farthest from its centroid."""
    sq = sq.copy()
    for j in np.flatnonzero(counts == 0):
        far = int(np.argmax(sq))
        counts[labels[far]] -= 1
        labels[far] = j
        counts[j] = 1
        centroids[j] = x[far]
        sq[far] = 0.0
    return labels


def lloyd(points, init, params: KmeansParams, threads: int = 1):
    """Lloyd iterations from ``init``.

    Returns ``(centroids, assignments, trace)`` where ``trace`` holds the
    objective of each assignment step. Iteration stops when the relative
    objective decrease falls below ``params.tol``, when the centroids stop
    moving, or after ``params.max_iters`` assignment steps.
    """
    x = as_points(points)
    c = as_points(init).copy()
    if c.shape[1] != x.shape[1]:
        raise ShapeError(f"dimension mismatch: points d={x.shape[1]}, init d={c.shape[1]}")
    k = c.shape[0]
    trace: list[float] = []
    prev = None
    for it in range(params.max_iters):
        cur = assign(x, c, threads)
        if prev is not None and cur.objective > prev[1].objective:
            # round-off only; keep the better previous state
            c, cur = prev
            break
        trace.append(cur.objective)
        if prev is not None:
            before = prev[1].objective
            if before - cur.objective <= params.tol * before:
                break
        if it == params.max_iters - 1:
            break
        sums, counts = _update(x, cur.labels, k, threads)
        new_c = c.copy()
        labels = cur.labels.copy()
        if (counts == 0).any():
            labels = _repair_empty(x, labels, cur.sq_dist, new_c, counts)
            sums, counts = _update(x, labels, k, threads)
        live = counts > 0
        new_c[live] = sums[live] / counts[live, None]
        if np.array_equal(new_c, c):
            break
        prev = (c, cur)
        c = new_c
    return c, cur, trace


def kmeans(points, params: KmeansParams, threads: int = 1):
    """k-means++ seeding followed by Lloyd; see :func:`lloyd` for the return value."""
    init = kmeans_pp_init(points, params.k, params.seed)
    return lloyd(points, init, params, threads)


def exact_kmeans_small(points, k: int):
    """Globally optimal k-means by enumerating every partition into k groups.

    Splitting a group never raises the objective, so the optimum over exactly
    ``k`` non-empty groups equals the optimum over at most ``k``.
    """
    x = as_points(points)
    n, d = x.shape
    if n > MAX_ORACLE_POINTS or k > MAX_ORACLE_K:
        raise ValidationError(
            f"instance too large for exhaustive search: n={n} (max {MAX_ORACLE_POINTS}), k={k} (max {MAX_ORACLE_K})"
        )
    if not 1 <= k <= n:
        raise ValidationError(f"need 1 <= k <= n, got k={k}, n={n}")

    xs = [tuple(row) for row in x.tolist()]
    sqn = [sum(v * v for v in row) for row in xs]
    counts = [0] * k
    sums = [[0.0] * d for _ in range(k)]
    sumsq = [0.0] * k
    labels = [0] * n
    best = [np.inf, None]

    def group_cost(g):
        s = sums[g]
        return sumsq[g] - sum(v * v for v in s) / counts[g]

    def rec(i, used):
        if n - i < k - used:
            return
        if i == n:
            total = sum(group_cost(g) for g in range(k))
            if total < best[0] - 1e-12:
                best[0] = total
                best[1] = labels.copy()
            return
        row = xs[i]
        for g in range(min(used + 1, k)):
            labels[i] = g
            counts[g] += 1
            sg = sums[g]
            for j in range(d):
                sg[j] += row[j]
            sumsq[g] += sqn[i]
            rec(i + 1, max(used, g + 1))
            counts[g] -= 1
            for j in range(d):
                sg[j] -= row[j]
            sumsq[g] -= sqn[i]

    rec(0, 0)
    lab = np.array(best[1], dtype=np.int64)
    centroids = np.stack([x[lab == g].mean(axis=0) for g in range(k)])
    return centroids, assign_exact(x, centroids, lab)


def assign_exact(x: np.ndarray, centroids: np.ndarray, labels: np.ndarray) -> Assignments:
    """Assignments object for a given labelling (no nearest-centroid search)."""
    diff = x - centroids[labels]
    sq = np.einsum("nd,nd->n", diff, diff)
    return Assignments(labels, float(sq.sum()), sq)
