"""Immutable data types shared by every estimator: labels, confusion and statistic tensors, posteriors."""

from collections.abc import Iterable, Iterator, Mapping, Sequence
from pprint import pformat
from textwrap import indent
from types import MappingProxyType
from typing import Final

import numpy as np

from crowdem.errors import InvariantError

__all__ = [
    "LabelSet",
    "ConfusionTensor",
    "StatTensor",
    "PosteriorMatrix",
    "GroundTruth",
    "ROW_SUM_ATOL",
]

# Row-sum tolerance for in-memory probability objects.
ROW_SUM_ATOL: Final[float] = 1e-12


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


class LabelSet:
    """
    A sparse worker x item matrix of crowd labels.

    Labels are stored as parallel observation arrays (worker index, item
    index, label in 1..k) in first-appearance order. A missing (worker,
    item) pair means "not labeled"; the sentinel 0 is never stored.

    Observations are additionally grouped per item (CSR layout:
    ``item_order[item_ptr[j]:item_ptr[j + 1]]`` are the observation indices
    of item j, in storage order).
    """

    def __init__(
          self,
          *,
          k: int,
          worker_ids: Sequence[str],
          item_ids: Sequence[str],
          workers: Iterable[int],
          items: Iterable[int],
          labels: Iterable[int],
    ):
        self.k: Final[int] = int(k)
        self.worker_ids: Final[tuple[str, ...]] = tuple(worker_ids)
        self.item_ids: Final[tuple[str, ...]] = tuple(item_ids)
        self.m: Final[int] = len(self.worker_ids)
        self.n: Final[int] = len(self.item_ids)
        self.workers: Final[np.ndarray] = _frozen(np.asarray(list(workers), dtype=np.intp))
        self.items: Final[np.ndarray] = _frozen(np.asarray(list(items), dtype=np.intp))
        self.labels: Final[np.ndarray] = _frozen(np.asarray(list(labels), dtype=np.intp))
        self._validate()

        self.worker_lookup: Final[Mapping[str, int]] = MappingProxyType(
            {w: i for i, w in enumerate(self.worker_ids)})
        self.item_lookup: Final[Mapping[str, int]] = MappingProxyType(
            {it: j for j, it in enumerate(self.item_ids)})

        order = np.argsort(self.items, kind="stable")
        counts = np.bincount(self.items, minlength=self.n)
        ptr = np.zeros(self.n + 1, dtype=np.intp)
        np.cumsum(counts, out=ptr[1:])
        self.item_order: Final[np.ndarray] = _frozen(order.astype(np.intp))
        self.item_ptr: Final[np.ndarray] = _frozen(ptr)

    @classmethod
    def from_rows(
          cls,
          rows: Iterable[tuple[str, str, int]],
          k: int | None = None,
    ) -> "LabelSet":
        """
        Builds a LabelSet from (item id, worker id, label) rows.

        Ids are mapped to dense indices in first-appearance order. When k is
        None it is the largest observed label.
        """
        worker_lookup: dict[str, int] = {}
        item_lookup: dict[str, int] = {}
        workers, items, labels = [], [], []
        for item_id, worker_id, label in rows:
            workers.append(worker_lookup.setdefault(worker_id, len(worker_lookup)))
            items.append(item_lookup.setdefault(item_id, len(item_lookup)))
            labels.append(int(label))
        if k is None:
            k = max(labels, default=0)
        return cls(
            k=k,
            worker_ids=list(worker_lookup),
            item_ids=list(item_lookup),
            workers=workers,
            items=items,
            labels=labels,
        )

    def _validate(self) -> None:
        if self.k < 1:
            raise InvariantError(f"class count must be >= 1, got {self.k}")
        size = len(self.labels)
        if len(self.workers) != size or len(self.items) != size:
            raise InvariantError("observation arrays differ in length")
        if size == 0:
            return
        if self.labels.min() < 1 or self.labels.max() > self.k:
            raise InvariantError(f"labels must lie in 1..{self.k}")
        if self.workers.min() < 0 or self.workers.max() >= self.m:
            raise InvariantError("worker index out of range")
        if self.items.min() < 0 or self.items.max() >= self.n:
            raise InvariantError("item index out of range")
        pair_keys = self.workers.astype(np.int64) * self.n + self.items
        if len(np.unique(pair_keys)) != size:
            raise InvariantError("a worker labeled the same item more than once")

    @property
    def num_observations(self) -> int:
        return len(self.labels)

    def item_observations(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """Returns (worker indices, labels) observed on item j, in storage order."""
        idx = self.item_order[self.item_ptr[j]:self.item_ptr[j + 1]]
        return self.workers[idx], self.labels[idx]

    def observations(self) -> Iterator[tuple[int, int, int]]:
        """Yields (worker, item, label) triples in storage order."""
        yield from zip(self.workers.tolist(), self.items.tolist(), self.labels.tolist())

    def subset_items(self, items: Sequence[int]) -> np.ndarray:
        """Observation indices of the given items, grouped by item in the given order."""
        if len(items) == 0:
            return np.zeros(0, dtype=np.intp)
        return np.concatenate([
            self.item_order[self.item_ptr[j]:self.item_ptr[j + 1]] for j in items
        ])

    def __str__(self):
        return "\n".join((
            "LabelSet(",
            indent(f"m={self.m}, n={self.n}, k={self.k},", " " * 4),
            indent(f"observations={self.num_observations},", " " * 4),
            indent(f"workers={pformat(self.worker_ids[:5])}{'...' if self.m > 5 else ''},", " " * 4),
            indent(f"items={pformat(self.item_ids[:5])}{'...' if self.n > 5 else ''}", " " * 4),
            ")",
        ))


class ConfusionTensor:
    """
    Per-worker row-stochastic confusion matrices, shape (m, k, k).

    Entry (i, l, g) is the probability that worker i labels a class-l item
    as g (classes are 0-based in the array). Strict positivity is enforced
    unless ``strict=False``, which only unsmoothed M-steps use.
    """

    def __init__(self, values, *, strict: bool = True, atol: float = ROW_SUM_ATOL):
        values = np.array(values, dtype=np.float64)
        if values.ndim != 3 or values.shape[1] != values.shape[2]:
            raise InvariantError(f"confusion tensor must have shape (m, k, k), got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise InvariantError("confusion tensor has non-finite entries")
        if strict and not np.all(values > 0):
            raise InvariantError("confusion tensor entries must be strictly positive")
        if not np.all(values >= 0):
            raise InvariantError("confusion tensor entries must be non-negative")
        sums = values.sum(axis=2)
        if not np.all(np.abs(sums - 1.0) <= atol):
            i, l = np.unravel_index(np.argmax(np.abs(sums - 1.0)), sums.shape)
            raise InvariantError(
                f"row (worker {i}, class {l + 1}) sums to {sums[i, l]!r}, not 1")
        self.values: Final[np.ndarray] = _frozen(values)
        self.m: Final[int] = values.shape[0]
        self.k: Final[int] = values.shape[1]
        self.strict: Final[bool] = strict

    @classmethod
    def uniform(cls, m: int, k: int) -> "ConfusionTensor":
        return cls(np.full((m, k, k), 1.0 / k))

    def log(self) -> np.ndarray:
        """Natural log of the entries; exact zeros map to -inf."""
        with np.errstate(divide="ignore"):
            return np.log(self.values)

    def __eq__(self, other):
        if not isinstance(other, ConfusionTensor):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash(self.values.tobytes())

    def __repr__(self):
        return f"ConfusionTensor(m={self.m}, k={self.k})"


class StatTensor:
    """Sufficient-statistic running averages, shape (m, k, k), every entry in (0, 1)."""

    def __init__(self, values):
        values = np.array(values, dtype=np.float64)
        if values.ndim != 3 or values.shape[1] != values.shape[2]:
            raise InvariantError(f"statistic tensor must have shape (m, k, k), got {values.shape}")
        if not np.all((values > 0) & (values < 1)):
            raise InvariantError("statistic tensor entries must lie in (0, 1)")
        self.values: Final[np.ndarray] = _frozen(values)
        self.m: Final[int] = values.shape[0]
        self.k: Final[int] = values.shape[1]

    @classmethod
    def full(cls, m: int, k: int, value: float) -> "StatTensor":
        return cls(np.full((m, k, k), value))

    def __eq__(self, other):
        if not isinstance(other, StatTensor):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash(self.values.tobytes())

    def __repr__(self):
        return f"StatTensor(m={self.m}, k={self.k})"


class PosteriorMatrix:
    """Per-item class responsibilities P(y_j = l | C, z_j), shape (n, k)."""

    def __init__(self, values, *, atol: float = ROW_SUM_ATOL):
        values = np.array(values, dtype=np.float64)
        if values.ndim != 2:
            raise InvariantError(f"posterior matrix must be 2-D, got shape {values.shape}")
        if not np.all(values >= 0):
            raise InvariantError("posterior entries must be non-negative")
        if values.shape[0] and not np.all(np.abs(values.sum(axis=1) - 1.0) <= atol):
            raise InvariantError("posterior rows must sum to 1")
        self.values: Final[np.ndarray] = _frozen(values)
        self.n: Final[int] = values.shape[0]
        self.k: Final[int] = values.shape[1]

    @classmethod
    def uniform(cls, n: int, k: int) -> "PosteriorMatrix":
        return cls(np.full((n, k), 1.0 / k))

    def __repr__(self):
        return f"PosteriorMatrix(n={self.n}, k={self.k})"


class GroundTruth:
    """A partial map from item index to its true label in 1..k."""

    def __init__(self, labels: Mapping[int, int], *, n: int, k: int):
        labels = {int(j): int(y) for j, y in labels.items()}
        for j, y in labels.items():
            if not 0 <= j < n:
                raise InvariantError(f"item index {j} out of range for n={n}")
            if not 1 <= y <= k:
                raise InvariantError(f"true label {y} of item {j} outside 1..{k}")
        self.labels: Final[Mapping[int, int]] = MappingProxyType(labels)
        self.n: Final[int] = n
        self.k: Final[int] = k

    def __len__(self):
        return len(self.labels)

    def __contains__(self, j):
        return j in self.labels

    def __getitem__(self, j):
        return self.labels[j]

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Returns (item indices, labels) sorted by item index."""
        items = np.array(sorted(self.labels), dtype=np.intp)
        return items, np.array([self.labels[j] for j in items.tolist()], dtype=np.intp)

    def __repr__(self):
        return f"GroundTruth({len(self.labels)} of {self.n} items, k={self.k})"
