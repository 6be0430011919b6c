"""Shared builders for the test suites."""

import numpy as np

from crowdem.model import ConfusionTensor, LabelSet

TOY_CSV = """item,worker,label
a,w1,1
a,w2,1
a,w3,2
b,w1,2
b,w2,2
c,w3,1
"""


def random_confusion(rng, m, k, floor=0.05):
    """Strictly positive row-stochastic tensor with entries bounded away from 0."""
    raw = rng.uniform(floor, 1.0, size=(m, k, k))
    return ConfusionTensor(raw / raw.sum(axis=2, keepdims=True))


def random_labelset(rng, m, n, k, density=0.6):
    """Every (worker, item) pair is labeled with probability density, uniformly at random."""
    workers, items, labels = [], [], []
    for j in range(n):
        for i in range(m):
            if rng.random() < density:
                workers.append(i)
                items.append(j)
                labels.append(int(rng.integers(1, k + 1)))
    return LabelSet(
        k=k,
        worker_ids=[f"w{i}" for i in range(m)],
        item_ids=[f"item{j}" for j in range(n)],
        workers=workers,
        items=items,
        labels=labels,
    )
