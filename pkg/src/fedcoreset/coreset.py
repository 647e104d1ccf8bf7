"""Distributed coreset construction over node-local data.

Three-step protocol: nodes profile their local k-means costs, the server
allocates per-node center and sample budgets against a total coreset size,
and each node reports its local k-means centers plus records sampled with
probability proportional to squared distance from the nearest center.

Clustering runs in a label-augmented space (one extra coordinate carrying
label * tau, tau = ceil(sqrt(feature_dim))) so same-label points cluster
together and centers decode to usable labels. The augmented coordinate is
stripped everywhere outside the clustering itself.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .clustering import kmeans, nearest_center_sq_dists
from .errors import DomainError


@dataclass(frozen=True)
class BudgetAllocation:
    """Per-node (centers, samples) counts summing exactly to the request."""

    centers: tuple[int, ...]
    samples: tuple[int, ...]

    @property
    def total(self) -> int:
        return sum(self.centers) + sum(self.samples)


@dataclass(frozen=True)
class LocalCoreset:
    node_id: int
    centers: np.ndarray          # (k_i, d) feature space, augmentation stripped
    center_labels: np.ndarray
    center_weights: np.ndarray
    sample_records: np.ndarray   # (m_i, d) verbatim rows of the node data
    sample_labels: np.ndarray
    sample_weights: np.ndarray
    sample_ids: np.ndarray       # record identities in the owning dataset
    node_size: int
    construction_seed: int
    clip_deficiency: float       # weight mass lost to clipping negative center weights


@dataclass(frozen=True)
class GlobalCoreset:
    """Server-side concatenation of local coresets.

    Row layout per node: centers first, then sampled records, preserving
    node order. `centers` repeats the center rows grouped by node for the
    distance-based prediction function; `center_counts` is the per-node
    boundary map.
    """

    points: np.ndarray
    labels: np.ndarray
    weights: np.ndarray
    node_ids: np.ndarray
    is_center: np.ndarray
    centers: np.ndarray
    center_counts: tuple[int, ...]
    exposed_samples: np.ndarray   # sorted unique record ids appearing as samples
    exposed_rows: np.ndarray
    node_sizes: tuple[int, ...]

    def __len__(self) -> int:
        return self.points.shape[0]


def label_scale(feature_dim: int) -> int:
    return math.ceil(math.sqrt(feature_dim))


def augment_with_labels(records: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Append a label * tau coordinate so cross-label points stay far apart."""
    records = np.asarray(records, dtype=float)
    tau = label_scale(records.shape[1])
    return np.concatenate([records, (np.asarray(labels, dtype=float) * tau)[:, None]], axis=1)


def decode_center_labels(centers_aug: np.ndarray, num_classes: int):
    """Split augmented centers into feature rows and rounded, clamped labels."""
    tau = label_scale(centers_aug.shape[1] - 1)
    labels = np.rint(centers_aug[:, -1] / tau).astype(int)
    labels = np.clip(labels, 0, num_classes - 1)
    return centers_aug[:, :-1], labels


def local_cost_profile(
    records: np.ndarray,
    labels: np.ndarray,
    k_grid,
    seed: int = 0,
) -> list[tuple[int, float]]:
    """One k-means run per grid value on the label-augmented node data."""
    points = augment_with_labels(records, labels)
    k_grid = [int(k) for k in k_grid]
    if any(k > points.shape[0] for k in k_grid):
        raise DomainError("grid contains k values exceeding the node size")
    seeds = np.random.SeedSequence(seed).spawn(len(k_grid))
    return [(k, kmeans(points, k, seed=s).cost) for k, s in zip(k_grid, seeds)]


def default_k_grid(node_size: int, center_budget: int) -> list[int]:
    """Powers of two from 1 up to min(node size, per-node center budget)."""
    cap = max(1, min(node_size, center_budget))
    grid = []
    k = 1
    while k <= cap:
        grid.append(k)
        k *= 2
    return grid


def _largest_remainder(pool: int, shares: np.ndarray) -> np.ndarray:
    """Integer split of pool proportional to shares; remainders go to the
    largest fractional parts, ties to the lowest index."""
    shares = np.asarray(shares, dtype=float)
    if pool == 0:
        return np.zeros(len(shares), dtype=int)
    if shares.sum() <= 0:
        shares = np.ones(len(shares))
    quotas = pool * shares / shares.sum()
    result = np.floor(quotas).astype(int)
    remainders = quotas - result
    leftover = pool - int(result.sum())
    # stable sort on -remainder keeps ties in ascending index order
    for idx in np.argsort(-remainders, kind="stable")[:leftover]:
        result[idx] += 1
    return result


def allocate_budget(
    cost_profiles: list[list[tuple[int, float]]],
    node_sizes,
    total_size: int,
    center_fraction: float | None = None,
    explicit: list[tuple[int, int]] | None = None,
) -> BudgetAllocation:
    """Split a total coreset size into per-node center and sample counts.

    Default rule: a center pool of round(total * center_fraction) and the
    complementary sample pool, each divided across nodes proportionally to
    the node's k=1 clustering cost with largest-remainder rounding. Every
    nonempty node keeps at least one center. Explicit per-node (k_i, m_i)
    overrides bypass the rule but must sum to total_size.
    """
    node_sizes = [int(n) for n in node_sizes]
    num_nodes = len(node_sizes)
    if num_nodes == 0:
        raise DomainError("no nodes")
    if total_size > sum(node_sizes):
        raise DomainError("coreset size exceeds the total data size")

    if explicit is not None:
        centers = tuple(int(k) for k, _ in explicit)
        samples = tuple(int(m) for _, m in explicit)
        if len(explicit) != num_nodes:
            raise DomainError("explicit allocation must cover every node")
        if sum(centers) + sum(samples) != total_size:
            raise DomainError("explicit allocation does not sum to the total size")
    else:
        if center_fraction is None or not 0.0 <= center_fraction <= 1.0:
            raise DomainError("center_fraction must lie in [0, 1]")
        if len(cost_profiles) != num_nodes:
            raise DomainError("need one cost profile per node")
        k1_costs = []
        for profile in cost_profiles:
            by_k = dict(profile)
            if 1 not in by_k:
                raise DomainError("cost profiles must include k=1")
            k1_costs.append(by_k[1])
        k1_costs = np.array(k1_costs)
        center_pool = int(round(total_size * center_fraction))
        sample_pool = total_size - center_pool
        nonempty = sum(1 for n in node_sizes if n > 0)
        if center_pool < nonempty:
            raise DomainError(
                f"center pool {center_pool} cannot give every nonempty node a center"
            )
        centers_arr = _largest_remainder(center_pool, k1_costs)
        # every nonempty node keeps at least one center
        for i in range(num_nodes):
            while node_sizes[i] > 0 and centers_arr[i] == 0:
                donor = int(np.argmax(centers_arr))
                centers_arr[donor] -= 1
                centers_arr[i] += 1
        samples_arr = _largest_remainder(sample_pool, k1_costs)
        centers = tuple(int(c) for c in centers_arr)
        samples = tuple(int(m) for m in samples_arr)

    for i, (k_i, m_i, n_i) in enumerate(zip(centers, samples, node_sizes)):
        if k_i > n_i:
            raise DomainError(f"node {i}: {k_i} centers exceed node size {n_i}")
        if m_i > n_i:
            raise DomainError(f"node {i}: {m_i} samples exceed node size {n_i}")
        if n_i > 0 and k_i < 1:
            raise DomainError(f"node {i}: nonempty nodes need at least one center")
        if k_i < 0 or m_i < 0:
            raise DomainError(f"node {i}: negative allocation")
    return BudgetAllocation(centers=centers, samples=samples)


def sampling_distribution(sq_dists: np.ndarray) -> np.ndarray:
    """Per-record draw probability, proportional to squared distance from the
    nearest center; uniform when every record sits on a center."""
    sq_dists = np.asarray(sq_dists, dtype=float)
    total = sq_dists.sum()
    if total == 0.0:
        return np.full(sq_dists.shape, 1.0 / sq_dists.size)
    return sq_dists / total


def build_local_coreset(
    records: np.ndarray,
    labels: np.ndarray,
    num_classes: int,
    num_centers: int,
    num_samples: int,
    seed: int = 0,
    node_id: int = 0,
    record_ids: np.ndarray | None = None,
) -> LocalCoreset:
    """Cluster the node in label-augmented space, then sample.

    Sample weights follow inverse-probability weighting
    u(p) = cost / (m * dist^2(p)); each center is weighted by its cluster
    size minus the weight of samples drawn from its cluster, clipped at 0.
    With clipping inactive the total weight equals the node size exactly.
    """
    records = np.asarray(records, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n = records.shape[0]
    if n == 0:
        raise DomainError("node data must be nonempty")
    if num_centers < 1 or num_centers > n:
        raise DomainError(f"need 1 <= centers <= {n}, got {num_centers}")
    if num_samples < 0 or num_samples > n:
        raise DomainError(f"need 0 <= samples <= {n}, got {num_samples}")
    if record_ids is None:
        record_ids = np.arange(n)
    record_ids = np.asarray(record_ids)

    points = augment_with_labels(records, labels)
    seeds = np.random.SeedSequence(seed).spawn(2)
    result = kmeans(points, num_centers, seed=seeds[0])
    assignment, sq = nearest_center_sq_dists(points, result.centers)
    cluster_sizes = np.bincount(assignment, minlength=num_centers).astype(float)
    local_cost = float(np.sum(sq))

    rng = np.random.default_rng(seeds[1])
    if num_samples > 0:
        probs = sampling_distribution(sq)
        drawn = rng.choice(n, size=num_samples, replace=True, p=probs)
        if local_cost == 0.0:
            sample_weights = np.full(num_samples, n / num_samples)
        else:
            sample_weights = local_cost / (num_samples * sq[drawn])
    else:
        drawn = np.empty(0, dtype=int)
        sample_weights = np.empty(0)

    center_weights = cluster_sizes.copy()
    np.subtract.at(center_weights, assignment[drawn], sample_weights)
    clip_deficiency = float(-center_weights[center_weights < 0].sum())
    center_weights = np.maximum(center_weights, 0.0)

    center_features, center_labels = decode_center_labels(result.centers, num_classes)
    return LocalCoreset(
        node_id=node_id,
        centers=center_features,
        center_labels=center_labels,
        center_weights=center_weights,
        sample_records=records[drawn],
        sample_labels=labels[drawn],
        sample_weights=sample_weights,
        sample_ids=record_ids[drawn],
        node_size=n,
        construction_seed=seed,
        clip_deficiency=clip_deficiency,
    )


def merge(local_coresets: list[LocalCoreset]) -> GlobalCoreset:
    """Concatenate local coresets preserving node provenance.

    Per node the centers come first, then the sampled records.
    """
    if not local_coresets:
        raise DomainError("need at least one local coreset")
    dim = local_coresets[0].centers.shape[1]
    for lc in local_coresets:
        if lc.centers.shape[1] != dim or (
            lc.sample_records.size and lc.sample_records.shape[1] != dim
        ):
            raise DomainError("local coresets have inconsistent dimensions")

    points, labels, weights, node_ids, is_center = [], [], [], [], []
    centers = []
    center_counts = []
    exposed_ids = []
    exposed_rows = []
    for lc in local_coresets:
        points.append(lc.centers)
        points.append(lc.sample_records)
        labels.append(lc.center_labels)
        labels.append(lc.sample_labels)
        weights.append(lc.center_weights)
        weights.append(lc.sample_weights)
        count = lc.centers.shape[0] + lc.sample_records.shape[0]
        node_ids.append(np.full(count, lc.node_id))
        is_center.append(
            np.concatenate(
                [
                    np.ones(lc.centers.shape[0], dtype=bool),
                    np.zeros(lc.sample_records.shape[0], dtype=bool),
                ]
            )
        )
        centers.append(lc.centers)
        center_counts.append(lc.centers.shape[0])
        exposed_ids.append(lc.sample_ids)
        exposed_rows.append(lc.sample_records)

    all_ids = np.concatenate(exposed_ids)
    all_rows = np.concatenate(exposed_rows) if all_ids.size else np.empty((0, dim))
    unique_ids, first_pos = np.unique(all_ids, return_index=True)
    return GlobalCoreset(
        points=np.concatenate(points),
        labels=np.concatenate(labels).astype(int),
        weights=np.concatenate(weights),
        node_ids=np.concatenate(node_ids).astype(int),
        is_center=np.concatenate(is_center),
        centers=np.concatenate(centers),
        center_counts=tuple(center_counts),
        exposed_samples=unique_ids,
        exposed_rows=all_rows[first_pos],
        node_sizes=tuple(lc.node_size for lc in local_coresets),
    )


def full_data_coreset(
    node_records: list[np.ndarray],
    node_labels: list[np.ndarray],
    node_record_ids: list[np.ndarray],
) -> GlobalCoreset:
    """Degenerate coreset equal to the entire training set, weight 1 each.

    No centers are produced; every record is exposed verbatim.
    """
    locals_ = []
    for node_id, (records, labels, ids) in enumerate(
        zip(node_records, node_labels, node_record_ids)
    ):
        records = np.asarray(records, dtype=float)
        labels = np.asarray(labels, dtype=int)
        if records.shape[0] == 0:
            raise DomainError("node data must be nonempty")
        locals_.append(
            LocalCoreset(
                node_id=node_id,
                centers=np.empty((0, records.shape[1])),
                center_labels=np.empty(0, dtype=int),
                center_weights=np.empty(0),
                sample_records=records,
                sample_labels=labels,
                sample_weights=np.ones(records.shape[0]),
                sample_ids=np.asarray(ids),
                node_size=records.shape[0],
                construction_seed=0,
                clip_deficiency=0.0,
            )
        )
    return merge(locals_)


def build_distributed_coreset(
    node_records: list[np.ndarray],
    node_labels: list[np.ndarray],
    num_classes: int,
    total_size: int,
    center_fraction: float,
    seed: int = 0,
    k_grid=None,
    explicit: list[tuple[int, int]] | None = None,
    node_record_ids: list[np.ndarray] | None = None,
) -> GlobalCoreset:
    """Run the full three-step protocol across all nodes and merge."""
    num_nodes = len(node_records)
    node_sizes = [np.asarray(r).shape[0] for r in node_records]
    if node_record_ids is None:
        node_record_ids = [np.arange(n) for n in node_sizes]
    seeds = np.random.SeedSequence(seed).spawn(num_nodes + 1)

    if explicit is None:
        budget_estimate = max(1, math.ceil(total_size * center_fraction / num_nodes))
        profiles = []
        for i in range(num_nodes):
            grid = k_grid if k_grid is not None else default_k_grid(node_sizes[i], budget_estimate)
            profiles.append(
                local_cost_profile(node_records[i], node_labels[i], grid, seed=seeds[i])
            )
    else:
        profiles = [[(1, 0.0)] for _ in range(num_nodes)]
    allocation = allocate_budget(
        profiles, node_sizes, total_size, center_fraction=center_fraction, explicit=explicit
    )

    locals_ = [
        build_local_coreset(
            node_records[i],
            node_labels[i],
            num_classes,
            allocation.centers[i],
            allocation.samples[i],
            seed=seeds[num_nodes].entropy if False else int(np.random.SeedSequence(seed).spawn(num_nodes + 1 + i)[0].generate_state(1)[0]),
            node_id=i,
            record_ids=node_record_ids[i],
        )
        for i in range(num_nodes)
    ]
    return merge(locals_)


def dump_csv(global_coreset: GlobalCoreset, path: str):
    """One weighted point per row: weight, label, then the feature values."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["weight", "label"] + [f"f{i}" for i in range(global_coreset.points.shape[1])]
        )
        for w, lbl, row in zip(
            global_coreset.weights, global_coreset.labels, global_coreset.points
        ):
            writer.writerow([repr(float(w)), int(lbl)] + [repr(float(v)) for v in row])
