"""Batch Dawid-Skene EM: majority-vote initialisation, the closed-form M-step and the EM loop."""

import logging
from dataclasses import dataclass, field

import numpy as np

from crowdem.config import DEFAULT_SMOOTHING
from crowdem.errors import DegenerateWorkerError, InvariantError
from crowdem.estep import expected_counts, posterior_all
from crowdem.metrics import error_rate, marginal_log_likelihood
from crowdem.model.types import ConfusionTensor, GroundTruth, LabelSet, PosteriorMatrix

__all__ = ["EMStep", "EMResult", "mv_posterior", "m_step", "em_fit", "predict"]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EMStep:
    iteration: int
    loglik: float
    error_rate: float | None = None


@dataclass(frozen=True)
class EMResult:
    confusion: ConfusionTensor
    posterior: PosteriorMatrix
    trajectory: list[EMStep] = field(default_factory=list)
    converged: bool = False

    @property
    def logliks(self) -> list[float]:
        return [step.loglik for step in self.trajectory]


def mv_posterior(labels: LabelSet) -> PosteriorMatrix:
    """
    Soft majority vote: p_jl is the fraction of item j's labels equal to l.

    Unlabeled items get the uniform row.
    """
    votes = np.zeros((labels.n, labels.k))
    np.add.at(votes, (labels.items, labels.labels - 1), 1.0)
    totals = votes.sum(axis=1, keepdims=True)
    empty = totals[:, 0] == 0
    votes[empty] = 1.0
    totals[empty] = labels.k
    return PosteriorMatrix(votes / totals)


def m_step(p: PosteriorMatrix, labels: LabelSet, smoothing: float = DEFAULT_SMOOTHING) -> ConfusionTensor:
    """
    Re-estimates the confusion tensor from responsibilities.

    c_ilg = (alpha + sum_j p_jl 1(z_ij = g)) / (k alpha + sum_g' sum_j p_jl 1(z_ij = g'))

    Args:
        p: Responsibilities, one row per item.
        labels: The observed labels.
        smoothing: The additive smoothing alpha >= 0. Any alpha > 0 keeps
            every entry strictly positive.

    Returns:
        The new confusion tensor. Workers without any label get uniform rows.

    Raises:
        DegenerateWorkerError: If alpha is 0 and a worker that has labels has
            no responsibility mass for some class.
    """
    if smoothing < 0:
        raise InvariantError(f"smoothing must be non-negative, got {smoothing}")
    k = labels.k
    counts = expected_counts(p, labels)
    totals = counts.sum(axis=2, keepdims=True)

    silent = np.bincount(labels.workers, minlength=labels.m) == 0
    counts[silent] = 1.0
    totals[silent] = k

    if smoothing == 0:
        empty = np.argwhere(totals[:, :, 0] == 0)
        if len(empty):
            i, l = empty[0].tolist()
            raise DegenerateWorkerError(
                f"no responsibility mass for class {l + 1}; use a positive smoothing",
                worker=i, worker_id=labels.worker_ids[i])
        return ConfusionTensor(counts / totals, strict=False)
    counts[~silent] += smoothing
    totals[~silent] += k * smoothing
    return ConfusionTensor(counts / totals)


def predict(p: PosteriorMatrix) -> np.ndarray:
    """Argmax labels in 1..k; ties go to the smallest class."""
    return np.argmax(p.values, axis=1) + 1


def em_fit(
      labels: LabelSet,
      init: PosteriorMatrix,
      max_iter: int = 50,
      tol: float = 1e-8,
      *,
      smoothing: float = DEFAULT_SMOOTHING,
      truth: GroundTruth | None = None,
      threads: int | None = None,
) -> EMResult:
    """
    Runs Dawid-Skene EM from the given responsibilities.

    The first model is the M-step on init (trajectory row 0). Each
    iteration then runs the E-step and the M-step and records the
    marginal log-likelihood of the new model. The loop stops once
    |delta loglik| < tol * (1 + |loglik|) or after max_iter iterations.

    Returns:
        The final confusion tensor, its posterior and the per-iteration
        trajectory (with error rates when truth is given).
    """
    if max_iter < 1:
        raise InvariantError(f"max_iter must be >= 1, got {max_iter}")
    if tol <= 0:
        raise InvariantError(f"tol must be positive, got {tol}")

    def record(iteration: int, c: ConfusionTensor, p: PosteriorMatrix) -> EMStep:
        loglik = marginal_log_likelihood(c, labels)
        rate = error_rate(predict(p), truth) if truth is not None and len(truth) else None
        logger.debug("EM iteration %d: loglik=%.17g error=%s", iteration, loglik, rate)
        return EMStep(iteration, loglik, rate)

    c = m_step(init, labels, smoothing)
    p = posterior_all(c, labels, threads)
    trajectory = [record(0, c, p)]
    converged = False
    for iteration in range(1, max_iter + 1):
        c = m_step(p, labels, smoothing)
        p = posterior_all(c, labels, threads)
        trajectory.append(record(iteration, c, p))
        previous, current = trajectory[-2].loglik, trajectory[-1].loglik
        if abs(current - previous) < tol * (1 + abs(current)):
            converged = True
            break

    logger.info("EM %s after %d iteration(s), loglik=%.6f",
                "converged" if converged else "stopped", len(trajectory) - 1, trajectory[-1].loglik)
    return EMResult(c, p, trajectory, converged)
