"""Lloyd's k-means with seeded k-means++ initialization.

Distances are computed by explicit differencing (chunked to bound memory)
rather than the expanded-dot-product trick, so zero distances are exactly
zero and equidistant ties resolve deterministically to the lowest index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

# upper bound on the (chunk, k, d) intermediate, in float64 elements
_CHUNK_ELEMENTS = 16_777_216


@dataclass(frozen=True)
class KmeansResult:
    centers: np.ndarray
    cost: float
    assignment: np.ndarray
    cost_history: tuple[float, ...]


def _as_points(points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[0] == 0:
        raise DomainError("points must be a nonempty (n, d) array")
    return points


def nearest_center_sq_dists(points: np.ndarray, centers: np.ndarray):
    """Index of and squared distance to the nearest center, per point.

    Ties break toward the lowest center index.
    """
    points = _as_points(points)
    centers = np.asarray(centers, dtype=float)
    if centers.ndim != 2 or centers.shape[0] == 0:
        raise DomainError("centers must be a nonempty (k, d) array")
    if centers.shape[1] != points.shape[1]:
        raise DomainError(
            f"dimension mismatch: points are {points.shape[1]}-d, centers {centers.shape[1]}-d"
        )
    n = points.shape[0]
    k, d = centers.shape
    chunk = max(1, _CHUNK_ELEMENTS // (k * d))
    indices = np.empty(n, dtype=int)
    sq = np.empty(n)
    for start in range(0, n, chunk):
        block = points[start : start + chunk]
        diffs = block[:, None, :] - centers[None, :, :]
        dists = np.einsum("ikd,ikd->ik", diffs, diffs)
        indices[start : start + chunk] = dists.argmin(axis=1)
        sq[start : start + chunk] = dists.min(axis=1)
    return indices, sq


def kmeans_cost(points: np.ndarray, centers: np.ndarray) -> float:
    """Sum of squared distances from each point to its nearest center."""
    _, sq = nearest_center_sq_dists(points, centers)
    return float(np.sum(sq))


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    first = rng.integers(n)
    centers[0] = points[first]
    best_sq = np.einsum("nd,nd->n", points - centers[0], points - centers[0])
    for i in range(1, k):
        total = best_sq.sum()
        if total > 0:
            idx = rng.choice(n, p=best_sq / total)
        else:
            idx = rng.integers(n)  # all points already covered
        centers[i] = points[idx]
        diff = points - centers[i]
        np.minimum(best_sq, np.einsum("nd,nd->n", diff, diff), out=best_sq)
    return centers


def _lloyd(points, k, rng, max_iters, tol):
    centers = _kmeans_pp_init(points, k, rng)
    history = []
    result_centers = centers
    assignment = None
    cost = None
    for _ in range(max_iters):
        assignment, sq = nearest_center_sq_dists(points, centers)
        cost = float(np.sum(sq))
        history.append(cost)
        result_centers = centers  # keep centers consistent with cost/assignment
        if len(history) > 1:
            prev = history[-2]
            if prev - cost <= tol * prev:
                break
        if cost == 0.0:
            break
        new_centers = np.zeros_like(centers)
        counts = np.bincount(assignment, minlength=k).astype(float)
        np.add.at(new_centers, assignment, points)
        occupied = counts > 0
        new_centers[occupied] /= counts[occupied, None]
        if not occupied.all():
            # reseed each empty center at the currently farthest point
            repair_sq = sq.copy()
            for j in np.flatnonzero(~occupied):
                far = int(repair_sq.argmax())
                new_centers[j] = points[far]
                repair_sq[far] = -1.0
        centers = new_centers
    return KmeansResult(
        centers=result_centers,
        cost=cost,
        assignment=assignment,
        cost_history=tuple(history),
    )


def kmeans(
    points: np.ndarray,
    k: int,
    seed: int = 0,
    max_iters: int = 100,
    tol: float = 1e-6,
    restarts: int = 1,
) -> KmeansResult:
    """k-means++ seeding followed by Lloyd iterations.

    Stops when the relative cost improvement drops below tol or after
    max_iters. The per-iteration cost sequence is nonincreasing and is kept
    in the result. With restarts > 1, the lowest-cost run wins.
    """
    points = _as_points(points)
    if k < 1:
        raise DomainError("k must be >= 1")
    if k > points.shape[0]:
        raise DomainError(f"k={k} exceeds the number of points ({points.shape[0]})")
    if restarts < 1:
        raise DomainError("restarts must be >= 1")
    seeds = np.random.SeedSequence(seed).spawn(restarts)
    best = None
    for s in seeds:
        result = _lloyd(points, k, np.random.default_rng(s), max_iters, tol)
        if best is None or result.cost < best.cost:
            best = result
    return best
