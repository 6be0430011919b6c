"""Evaluation: error rate, marginal log-likelihood, fixed-point residual and stationarity gap."""

import logging
import math
from collections.abc import Sequence
from decimal import ROUND_HALF_UP, Decimal
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from crowdem.errors import InvariantError
from crowdem.estep import expected_counts, log_scores, posterior_all
from crowdem.model.types import ConfusionTensor, GroundTruth, LabelSet, StatTensor

__all__ = [
    "ResidualReport",
    "error_rate",
    "format_error_rate",
    "marginal_log_likelihood",
    "batch_statistic",
    "fixed_point_residual",
    "stationarity_gap",
]

logger = logging.getLogger(__name__)

_TINY = np.finfo(np.float64).tiny
_BELOW_ONE = np.nextafter(1.0, 0.0)


class ResidualReport(NamedTuple):
    drift: np.ndarray
    inf_norm: float
    frobenius: float


def error_rate(predicted: Sequence[int], truth: GroundTruth) -> float:
    """
    Percentage of items in truth whose predicted label differs from the true one.

    Items absent from truth are ignored.
    """
    if len(truth) == 0:
        raise InvariantError("error rate needs at least one ground-truth item")
    items, expected = truth.as_arrays()
    predicted = np.asarray(predicted)
    mismatches = int(np.count_nonzero(predicted[items] != expected))
    return 100.0 * mismatches / len(truth)


def format_error_rate(rate: float) -> str:
    """Two decimals, rounding halves up (the precision of published tables)."""
    return str(Decimal(repr(rate)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def marginal_log_likelihood(c: ConfusionTensor, labels: LabelSet) -> float:
    """
    The marginal log-likelihood of the observed labels with true labels summed out.

    True labels are weighted uniformly (k^-n per assignment), which makes the
    value the log-probability of the labels and gives unlabeled items a zero
    term; it differs from the unweighted sum only by the constant -n log k.
    The sum over [k]^n factorises over items, so this is the sum of
    per-item log-sum-exp of the class log-scores.
    """
    if labels.n == 0:
        return 0.0
    per_item = logsumexp(log_scores(c, labels), axis=1) - math.log(labels.k)
    return math.fsum(per_item.tolist())


def batch_statistic(c: ConfusionTensor, labels: LabelSet) -> StatTensor:
    """
    The full-batch statistic w_ilg = (1/n) sum_j P(y_j = l | C, z_j) * 1(z_ij = g).

    Entries are floored at the smallest positive double and capped just
    below 1 so the result is a valid StatTensor even for workers that never
    used some label.
    """
    p = posterior_all(c, labels)
    w = expected_counts(p, labels) / max(labels.n, 1)
    return StatTensor(np.clip(w, _TINY, _BELOW_ONE))


def fixed_point_residual(s: StatTensor, labels: LabelSet) -> ResidualReport:
    """
    The mean-field drift batch_statistic(normalize(S)) - S and its infinity and Frobenius norms.

    The drift vanishes exactly at fixed points of batch EM.
    """
    from crowdem.online.online_em import normalize

    c = normalize(s)
    p = posterior_all(c, labels)
    w = expected_counts(p, labels) / max(labels.n, 1)
    drift = np.clip(w, _TINY, _BELOW_ONE) - s.values
    inf_norm = float(np.max(np.abs(drift))) if drift.size else 0.0
    frobenius = float(np.linalg.norm(drift.ravel()))
    logger.debug("fixed-point residual: inf=%.3e fro=%.3e", inf_norm, frobenius)
    return ResidualReport(drift, inf_norm, frobenius)


def stationarity_gap(c: ConfusionTensor, labels: LabelSet, h: float = 1e-5) -> float:
    """
    Largest absolute directional derivative of the marginal log-likelihood
    along simplex-tangent directions.

    For every worker i, true class l and label pair (g, g') the entries
    c_ilg and c_ilg' are moved by +h and -h (and back the other way) and the
    central difference of the log-likelihood is taken. Only items the
    worker labeled with g or g' change, so only their terms are recomputed.
    The step is shrunk to half the smaller of the two entries when needed,
    so the perturbed point stays inside the simplex.

    Args:
        c: A strictly positive confusion tensor.
        labels: The observed labels.
        h: Finite-difference step in [1e-7, 1e-4].

    Returns:
        The maximum absolute directional derivative; 0 when no worker labels
        anything.
    """
    if not 1e-7 <= h <= 1e-4:
        raise InvariantError(f"finite-difference step must lie in [1e-7, 1e-4], got {h}")
    k = c.k
    scores = log_scores(c, labels)
    by_worker = np.argsort(labels.workers, kind="stable")
    bounds = np.searchsorted(labels.workers[by_worker], np.arange(labels.m + 1))

    gap = 0.0
    for i in range(labels.m):
        idx = by_worker[bounds[i]:bounds[i + 1]]
        if not len(idx):
            continue
        items, given = labels.items[idx], labels.labels[idx] - 1
        for l in range(k):
            row = c.values[i, l]
            for g in range(k):
                for g2 in range(g + 1, k):
                    touched = (given == g) | (given == g2)
                    if not touched.any():
                        continue
                    step = min(h, row[g] / 2, row[g2] / 2)
                    rows = scores[items[touched]]
                    is_g = given[touched] == g
                    up = np.where(is_g, math.log1p(step / row[g]), math.log1p(-step / row[g2]))
                    down = np.where(is_g, math.log1p(-step / row[g]), math.log1p(step / row[g2]))
                    plus, minus = rows.copy(), rows.copy()
                    plus[:, l] += up
                    minus[:, l] += down
                    diff = math.fsum((logsumexp(plus, axis=1) - logsumexp(minus, axis=1)).tolist())
                    gap = max(gap, abs(diff) / (2 * step))
    logger.debug("stationarity gap with h=%g: %.3e", h, gap)
    return gap
