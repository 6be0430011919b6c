"""Seeded synthetic crowdsourcing instances drawn from the confusion-tensor model."""

import logging
from pathlib import Path
from typing import NamedTuple

import numpy as np

from crowdem.errors import InvariantError
from crowdem.model.checkpoint import save_checkpoint
from crowdem.model.loaders import write_ground_truth, write_labels
from crowdem.model.types import ConfusionTensor, GroundTruth, LabelSet

__all__ = ["SyntheticInstance", "gen_instance", "write_instance"]

logger = logging.getLogger(__name__)


class SyntheticInstance(NamedTuple):
    labels: LabelSet
    truth: GroundTruth
    confusion: ConfusionTensor


def _check(m: int, n: int, k: int, lo: float, hi: float, r: int) -> None:
    if k < 2:
        raise InvariantError(f"need at least 2 classes, got k={k}")
    if m < 1 or n < 1:
        raise InvariantError(f"need m >= 1 and n >= 1, got m={m}, n={n}")
    if not 1 <= r <= m:
        raise InvariantError(f"labels per item must lie in 1..m={m}, got {r}")
    # lo = 1/k (chance-level workers) is allowed; compare with a little slack.
    if not (lo >= 1.0 / k - 1e-12 and lo <= hi < 1):
        raise InvariantError(f"diagonal accuracy range must satisfy 1/k <= lo <= hi < 1, got [{lo}, {hi}]")


def gen_instance(
      m: int,
      n: int,
      k: int,
      lo: float,
      hi: float,
      r: int,
      seed: int,
) -> SyntheticInstance:
    """
    Draws a synthetic instance.

    True labels are uniform over the k classes. Worker i answers correctly
    with probability u_i ~ U[lo, hi] and spreads the remaining mass evenly
    over the k - 1 wrong classes. Each item is labeled by r distinct
    workers chosen uniformly.

    The LabelSet indexes workers and items in first-appearance order, which
    makes it identical to what :func:`load_labels` reads back from
    :func:`write_instance` output; the returned confusion tensor is
    re-indexed to match and drops workers that were never sampled.
    """
    _check(m, n, k, lo, hi, r)
    rng = np.random.default_rng(seed)
    truth = rng.integers(0, k, size=n)
    accuracy = rng.uniform(lo, hi, size=m)
    off = (1 - accuracy) / (k - 1)
    confusion = np.repeat(off[:, None, None], k, axis=1).repeat(k, axis=2)
    confusion[:, np.arange(k), np.arange(k)] = accuracy[:, None]

    rows = []
    for j in range(n):
        chosen = rng.choice(m, size=r, replace=False)
        for i in chosen.tolist():
            label = int(rng.choice(k, p=confusion[i, truth[j]])) + 1
            rows.append((f"item{j}", f"w{i}", label))

    labels = LabelSet.from_rows(rows, k=k)
    generated = np.array([int(w[1:]) for w in labels.worker_ids], dtype=np.intp)
    items = np.array([int(it[4:]) for it in labels.item_ids], dtype=np.intp)
    ground = GroundTruth({j: int(truth[items[j]]) + 1 for j in range(labels.n)},
                         n=labels.n, k=k)
    logger.info("Generated m=%d (of %d) workers, n=%d items, k=%d, %d labels",
                labels.m, m, labels.n, k, labels.num_observations)
    return SyntheticInstance(labels, ground, ConfusionTensor(confusion[generated]))


def write_instance(instance: SyntheticInstance, out_dir: Path) -> dict[str, Path]:
    """Writes labels.csv, truth.csv and true_model.txt into out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "labels": out_dir / "labels.csv",
        "truth": out_dir / "truth.csv",
        "model": out_dir / "true_model.txt",
    }
    with open(paths["labels"], "w", newline="", encoding="utf-8") as f:
        write_labels(instance.labels, f)
    with open(paths["truth"], "w", newline="", encoding="utf-8") as f:
        write_ground_truth(instance.truth, instance.labels, f)
    with open(paths["model"], "w", encoding="utf-8", newline="\n") as f:
        save_checkpoint(instance.confusion, f)
    return paths
