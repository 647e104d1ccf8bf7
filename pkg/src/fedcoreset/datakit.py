"""Dataset ingestion, synthetic generation, node partitioning, and
membership-split construction.

Record identity is the index into the owning Dataset, not value equality,
so duplicate rows cannot corrupt membership labels.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ParseError


@dataclass(frozen=True)
class Dataset:
    """Binary feature matrix (stored as float for training) plus labels."""

    records: np.ndarray
    labels: np.ndarray
    num_classes: int
    provenance: str = ""

    def __post_init__(self):
        if self.records.ndim != 2:
            raise DomainError("records must be a 2-D matrix")
        if self.labels.shape != (self.records.shape[0],):
            raise DomainError("labels must be one per record")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise DomainError("labels must lie in [0, num_classes)")

    def __len__(self) -> int:
        return self.records.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.records.shape[1]


@dataclass(frozen=True)
class SynthSpec:
    """Per-class Bernoulli prototypes with independent bit flips."""

    num_records: int
    feature_dim: int
    num_classes: int
    flip_rate: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.flip_rate < 0.5:
            raise DomainError("flip_rate must lie strictly between 0 and 0.5")
        if self.num_records < self.num_classes:
            raise DomainError("need at least one record per class")
        if self.feature_dim < 1 or self.num_classes < 1:
            raise DomainError("feature_dim and num_classes must be >= 1")


@dataclass(frozen=True)
class Partition:
    """Node shards plus the held-out test pool, as indices into a Dataset."""

    node_indices: tuple[np.ndarray, ...]
    test_indices: np.ndarray

    @property
    def train_indices(self) -> np.ndarray:
        return np.concatenate(self.node_indices)


@dataclass(frozen=True)
class MembershipSizes:
    s_train: int
    s_test: int
    sp_train: int
    sp_test: int


@dataclass(frozen=True)
class MembershipSplit:
    """Leaked and held-out member/non-member index sets.

    s_train/s_test feed the attack model's training set; sp_train/sp_test
    (the primed sets) are reserved for evaluating it.
    """

    s_train: np.ndarray
    s_test: np.ndarray
    sp_train: np.ndarray
    sp_test: np.ndarray

    def validate(self):
        if np.intersect1d(self.s_train, self.sp_train).size:
            raise DomainError("leaked and held-out member sets overlap")
        if np.intersect1d(self.s_test, self.sp_test).size:
            raise DomainError("leaked and held-out non-member sets overlap")


def load_csv(path: str) -> Dataset:
    """Parse a label-first CSV of binary features.

    First column: integer class label; remaining columns must be 0 or 1.
    An optional non-numeric header row is skipped. The number of classes is
    inferred as max label + 1.
    """
    rows: list[list[int]] = []
    width = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, raw in enumerate(reader, start=1):
            if not raw or (len(raw) == 1 and not raw[0].strip()):
                continue
            try:
                values = [int(v) for v in raw]
            except ValueError:
                if lineno == 1:
                    continue  # header
                raise ParseError("non-integer value", row=lineno) from None
            if len(values) < 2:
                raise ParseError("need a label and at least one feature", row=lineno)
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise ParseError(
                    f"expected {width} columns, got {len(values)}", row=lineno
                )
            if values[0] < 0:
                raise ParseError("negative class label", row=lineno)
            if any(v not in (0, 1) for v in values[1:]):
                raise ParseError("feature values must be 0 or 1", row=lineno)
            rows.append(values)
    if not rows:
        raise ParseError("no data rows found")
    data = np.array(rows, dtype=float)
    labels = data[:, 0].astype(int)
    return Dataset(
        records=data[:, 1:],
        labels=labels,
        num_classes=int(labels.max()) + 1,
        provenance=f"csv:{path}",
    )


def generate_synthetic(spec: SynthSpec) -> Dataset:
    """Balanced classes (up to remainder), each record a noisy prototype copy."""
    rng = np.random.default_rng(spec.seed)
    prototypes = rng.integers(0, 2, size=(spec.num_classes, spec.feature_dim))
    base = spec.num_records // spec.num_classes
    remainder = spec.num_records % spec.num_classes
    records = []
    labels = []
    for c in range(spec.num_classes):
        count = base + (1 if c < remainder else 0)
        flips = rng.random((count, spec.feature_dim)) < spec.flip_rate
        records.append(np.logical_xor(prototypes[c], flips).astype(float))
        labels.append(np.full(count, c))
    return Dataset(
        records=np.concatenate(records),
        labels=np.concatenate(labels).astype(int),
        num_classes=spec.num_classes,
        provenance=f"synthetic:{spec}",
    )


def partition(
    dataset: Dataset,
    train_size: int,
    test_size: int,
    num_nodes: int,
    seed: int,
) -> Partition:
    """Seeded shuffle, then a train prefix split evenly across nodes.

    Shard sizes differ by at most one; the remainder goes to the lowest
    node ids. The next test_size records form the test pool.
    """
    if num_nodes < 1:
        raise DomainError("num_nodes must be >= 1")
    if train_size < num_nodes:
        raise DomainError("need at least one training record per node")
    if train_size + test_size > len(dataset):
        raise DomainError(
            f"train_size + test_size = {train_size + test_size} exceeds dataset size {len(dataset)}"
        )
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(dataset))
    train_ids = order[:train_size]
    test_ids = order[train_size : train_size + test_size]
    base = train_size // num_nodes
    remainder = train_size % num_nodes
    shards = []
    start = 0
    for i in range(num_nodes):
        size = base + (1 if i < remainder else 0)
        shards.append(train_ids[start : start + size])
        start += size
    return Partition(node_indices=tuple(shards), test_indices=test_ids)


def make_membership_split(
    train_indices: np.ndarray,
    test_indices: np.ndarray,
    sizes: MembershipSizes,
    exposed_samples: np.ndarray | None = None,
    seed: int = 0,
) -> MembershipSplit:
    """Seeded disjoint draws of leaked and held-out member/non-member sets.

    Coreset-exposed records are forced into the leaked member set (and are
    therefore excluded from the held-out member set).
    """
    train_indices = np.asarray(train_indices)
    test_indices = np.asarray(test_indices)
    exposed = np.unique(exposed_samples) if exposed_samples is not None else np.empty(0, dtype=int)
    if exposed.size and np.setdiff1d(exposed, train_indices).size:
        raise DomainError("exposed samples must come from the training pool")
    if exposed.size > sizes.s_train:
        raise DomainError(
            f"{exposed.size} exposed samples exceed the leaked member budget {sizes.s_train}"
        )
    if sizes.s_train + sizes.sp_train > train_indices.size:
        raise DomainError("member set sizes exceed the training pool")
    if sizes.s_test + sizes.sp_test > test_indices.size:
        raise DomainError("non-member set sizes exceed the test pool")

    rng = np.random.default_rng(seed)
    unexposed = np.setdiff1d(train_indices, exposed)
    train_order = rng.permutation(unexposed)
    fill = sizes.s_train - exposed.size
    s_train = np.concatenate([exposed, train_order[:fill]])
    sp_train = train_order[fill : fill + sizes.sp_train]
    test_order = rng.permutation(test_indices)
    s_test = test_order[: sizes.s_test]
    sp_test = test_order[sizes.s_test : sizes.s_test + sizes.sp_test]
    split = MembershipSplit(
        s_train=np.sort(s_train),
        s_test=np.sort(s_test),
        sp_train=np.sort(sp_train),
        sp_test=np.sort(sp_test),
    )
    split.validate()
    return split
