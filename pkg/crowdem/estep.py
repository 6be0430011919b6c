"""
The E-step: per-item class posteriors under a confusion tensor, and the
per-sample statistic used by the online update.

All scores are accumulated in the natural-log domain and normalised with a
single max-shift per item, so items with hundreds of labels cannot
underflow.
"""

import logging
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.special import softmax

from crowdem.config import default_threads
from crowdem.errors import DegenerateWorkerError
from crowdem.model.types import ConfusionTensor, LabelSet, PosteriorMatrix

__all__ = [
    "posterior",
    "posterior_all",
    "sample_stat",
    "expected_counts",
    "log_scores",
    "as_observations",
]

logger = logging.getLogger(__name__)


def as_observations(obs) -> tuple[np.ndarray, np.ndarray]:
    """
    Normalises one item's observations to (worker indices, labels) arrays.

    Accepts a sequence of (worker, label) pairs or an already split
    ``(workers, labels)`` pair of arrays as returned by
    :meth:`LabelSet.item_observations`.
    """
    if isinstance(obs, tuple) and len(obs) == 2 and all(isinstance(o, np.ndarray) for o in obs):
        return obs[0].astype(np.intp, copy=False), obs[1].astype(np.intp, copy=False)
    pairs = np.asarray(obs, dtype=np.intp).reshape(-1, 2)
    return pairs[:, 0], pairs[:, 1]


def _accumulate(logc: np.ndarray, workers: np.ndarray, slots: np.ndarray,
                labels: np.ndarray, rows: int) -> np.ndarray:
    # Sequential np.add.at keeps the per-item accumulation order fixed.
    scores = np.zeros((rows, logc.shape[1]))
    np.add.at(scores, slots, logc[workers, :, labels - 1])
    return scores


def _normalise(scores: np.ndarray, logc: np.ndarray, workers: np.ndarray, slots: np.ndarray,
               labels: np.ndarray, worker_ids: Sequence[str] | None = None,
               item_ids: Sequence[str] | None = None) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        p = softmax(scores, axis=1)
    if not np.all(np.isfinite(p)):
        row = int(np.flatnonzero(~np.isfinite(p).all(axis=1))[0])
        on_row = slots == row
        # First observation (storage order) that rules out some class.
        ruling = np.isneginf(logc[workers[on_row], :, labels[on_row] - 1]).any(axis=1)
        worker = int(workers[on_row][ruling][0])
        item = f"item '{item_ids[row]}'" if item_ids is not None else f"row {row}"
        raise DegenerateWorkerError(
            f"{item} has zero likelihood under every class",
            worker=worker, worker_id=worker_ids[worker] if worker_ids is not None else None)
    return p


def log_scores(c: ConfusionTensor, labels: LabelSet) -> np.ndarray:
    """Unnormalised log-scores sum_{i,g} 1(z_ij = g) log c_ilg, shape (n, k)."""
    logc = c.log()
    order = labels.item_order
    return _accumulate(logc, labels.workers[order], labels.items[order],
                       labels.labels[order], labels.n)


def posterior(c: ConfusionTensor, obs) -> np.ndarray:
    """
    P(y = l | C, z) for a single item.

    Args:
        c: The confusion tensor.
        obs: The item's (worker index, label) pairs, labels in 1..k.

    Returns:
        A length-k probability vector; the uniform vector when obs is empty.
    """
    workers, labels = as_observations(obs)
    logc = c.log()
    slots = np.zeros(len(workers), dtype=np.intp)
    scores = _accumulate(logc, workers, slots, labels, 1)
    return _normalise(scores, logc, workers, slots, labels)[0]


def _posterior_block(logc: np.ndarray, labels: LabelSet, start: int, stop: int) -> np.ndarray:
    idx = labels.item_order[labels.item_ptr[start]:labels.item_ptr[stop]]
    workers, slots, given = labels.workers[idx], labels.items[idx] - start, labels.labels[idx]
    scores = _accumulate(logc, workers, slots, given, stop - start)
    return _normalise(scores, logc, workers, slots, given,
                      labels.worker_ids, labels.item_ids[start:stop])


def posterior_all(c: ConfusionTensor, labels: LabelSet, threads: int | None = None) -> PosteriorMatrix:
    """
    Applies :func:`posterior` to every item of labels.

    Items are independent, so with ``threads > 1`` contiguous item blocks
    are evaluated concurrently; the result is bit-identical to the
    sequential one.
    """
    threads = default_threads() if threads is None else threads
    logc = c.log()
    logger.debug("E-step over %d items with %d thread(s)", labels.n, threads)
    if threads <= 1 or labels.n < 2 * threads:
        values = _posterior_block(logc, labels, 0, labels.n)
    else:
        bounds = np.linspace(0, labels.n, threads + 1).astype(int)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            blocks = pool.map(lambda se: _posterior_block(logc, labels, *se),
                              zip(bounds[:-1].tolist(), bounds[1:].tolist()))
            values = np.concatenate(list(blocks), axis=0)
    return PosteriorMatrix(values)


def sample_stat(c: ConfusionTensor, obs) -> np.ndarray:
    """
    The per-sample statistic a_ilg = P(y = l | C, z) * 1(z_i = g), shape (m, k, k).

    For every worker i that labeled the item with g the slice a[i, :, g] is
    the item's posterior; every other entry is exactly 0.
    """
    workers, labels = as_observations(obs)
    a = np.zeros((c.m, c.k, c.k))
    if len(workers):
        p = posterior(c, (workers, labels))
        a[workers, :, labels - 1] = p
    return a


def expected_counts(p: PosteriorMatrix, labels: LabelSet) -> np.ndarray:
    """
    Posterior-weighted label counts t_ilg = sum_j p_jl * 1(z_ij = g), shape (m, k, k).

    Observations are reduced in storage order.
    """
    k = labels.k
    counts = np.zeros((labels.m, k, k))
    np.add.at(counts, (labels.workers, slice(None), labels.labels - 1), p.values[labels.items])
    return counts
