"""
Online Dawid-Skene: the M-step is replaced by a stochastic-approximation
update of the sufficient statistic S, one item per iteration, while the
E-step is unchanged.

    s_ilg(j) = s_ilg(j-1) + eta_j * (P(y = l | normalize(S(j-1)), z) * 1(z_i = g) - s_ilg(j-1))

where normalize is the row normalisation S -> C. Optionally every candidate is passed
through the projection safeguard.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from crowdem.batch_em import m_step, mv_posterior, predict
from crowdem.errors import InvariantError
from crowdem.estep import posterior_all, sample_stat
from crowdem.metrics import error_rate, marginal_log_likelihood
from crowdem.model.types import ConfusionTensor, GroundTruth, LabelSet, PosteriorMatrix, StatTensor
from crowdem.online.projection import ProjectionEvent, ProjectionFamily, box_epsilon, project
from crowdem.online.schedule import StepSchedule, eta

__all__ = [
    "Sampling",
    "OnlineState",
    "EpochRecord",
    "OnlineResult",
    "normalize",
    "sa_update",
    "init_stats",
    "online_fit",
]

logger = logging.getLogger(__name__)


class Sampling(Enum):
    WITH_REPLACEMENT = "with-replacement"
    SHUFFLE = "shuffle"


def normalize(s: StatTensor) -> ConfusionTensor:
    """Row-normalises a statistic into a confusion tensor, c_ilg = s_ilg / sum_g' s_ilg'."""
    return ConfusionTensor(s.values / s.values.sum(axis=2, keepdims=True))


@dataclass
class OnlineState:
    """The online iterate: S, C = normalize(S), the iteration counter j and the projection family."""

    stats: StatTensor
    confusion: ConfusionTensor
    family: ProjectionFamily
    iteration: int = 0

    @classmethod
    def start(cls, stats: StatTensor) -> "OnlineState":
        """Starts at stats; resets return to stats when it lies in the base box, else to the all-0.5 point."""
        if ProjectionFamily.contains(stats.values, 0):
            family = ProjectionFamily(stats)
        else:
            family = ProjectionFamily.centered(stats.m, stats.k)
        return cls(stats, normalize(stats), family)


def sa_update(state: OnlineState, obs, step: float) -> np.ndarray:
    """
    One stochastic-approximation step towards the item's sample statistic.

    Args:
        state: The current iterate.
        obs: The sampled item's (worker, label) pairs.
        step: The step size eta in (0, 1).

    Returns:
        The candidate statistic S + eta (A - S), where A = sample_stat(normalize(S), obs).
        It is a strict convex combination, so every entry stays in (0, 1).
    """
    if not 0 < step < 1:
        raise InvariantError(f"step size must lie in (0, 1), got {step}")
    a = sample_stat(state.confusion, obs)
    s = state.stats.values
    return s + step * (a - s)


def init_stats(labels: LabelSet, mode: str = "mv") -> StatTensor:
    """
    The starting statistic S(0), always inside the base box [0.25, 0.75].

    ``mv``: the majority-vote confusion tensor m_step(mv_posterior) clamped
    into the base box, so normalize(S(0)) reproduces the majority-vote model wherever no entry
    needed clamping. ``uniform``: every entry 0.5.
    """
    if mode == "uniform":
        return StatTensor.full(labels.m, labels.k, 0.5)
    if mode != "mv":
        raise InvariantError(f"unknown initialisation '{mode}'")
    eps = box_epsilon(0)
    c = m_step(mv_posterior(labels), labels)
    return StatTensor(np.clip(c.values, eps, 1 - eps))


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loglik: float
    projections: int
    error_rate: float | None = None


@dataclass(frozen=True)
class OnlineResult:
    confusion: ConfusionTensor
    stats: StatTensor
    posterior: PosteriorMatrix
    trajectory: list[EpochRecord] = field(default_factory=list)
    projection_events: list[ProjectionEvent] = field(default_factory=list)


def online_fit(
      labels: LabelSet,
      schedule: StepSchedule,
      epochs: int,
      seed: int = 0,
      sampling: Sampling | str = Sampling.WITH_REPLACEMENT,
      projection: bool = True,
      init: StatTensor | None = None,
      *,
      truth: GroundTruth | None = None,
      start_posterior: PosteriorMatrix | None = None,
      reset: StatTensor | None = None,
      threads: int | None = None,
) -> OnlineResult:
    """
    Runs epochs * n online iterations.

    Items are drawn uniformly with replacement by default, or as a fresh
    permutation per epoch with ``sampling="shuffle"``; both are seeded.
    Metrics are taken at epoch boundaries only. Epoch 0 describes the
    starting point: its error rate comes from start_posterior when given
    (for instance the majority-vote responsibilities the start was built
    from), otherwise from the posterior under normalize(S(0)).

    Args:
        labels: The observed labels.
        schedule: The step-size rule.
        epochs: Number of passes, >= 1.
        seed: Seed of the item sampler.
        sampling: "with-replacement" or "shuffle".
        projection: Pass every candidate through the projection safeguard.
        init: S(0); defaults to init_stats(labels, "mv").
        truth: Optional ground truth for per-epoch error rates.
        start_posterior: Responsibilities describing the start (epoch 0 error).
        reset: Projection reset point in the base box; defaults to init when init lies
            in the base box, else to the all-0.5 tensor.
        threads: Thread count for the epoch-boundary E-step.

    Returns:
        The final model, its posterior, the per-epoch trajectory and the
        log of projection events.
    """
    if epochs < 1:
        raise InvariantError(f"epochs must be >= 1, got {epochs}")
    if labels.n == 0:
        raise InvariantError("online fitting needs at least one item")
    sampling = Sampling(sampling)
    if init is None:
        init = init_stats(labels, "mv")
    if (init.m, init.k) != (labels.m, labels.k):
        raise InvariantError(
            f"initial statistic has shape (m={init.m}, k={init.k}), labels have (m={labels.m}, k={labels.k})")

    rng = np.random.default_rng(seed)
    state = OnlineState.start(init)
    if reset is not None:
        if (reset.m, reset.k) != (labels.m, labels.k):
            raise InvariantError(f"reset point has shape (m={reset.m}, k={reset.k}), labels have (m={labels.m}, k={labels.k})")
        state.family = ProjectionFamily(reset)
    events: list[ProjectionEvent] = []
    scored = truth is not None and len(truth) > 0

    def record(epoch: int, p: PosteriorMatrix) -> EpochRecord:
        loglik = marginal_log_likelihood(state.confusion, labels)
        rate = error_rate(predict(p), truth) if scored else None
        logger.info("epoch %d: loglik=%.6f error=%s projections=%d",
                    epoch, loglik, rate, state.family.t)
        return EpochRecord(epoch, loglik, state.family.t, rate)

    start = start_posterior if start_posterior is not None else posterior_all(state.confusion, labels, threads)
    trajectory = [record(0, start)]

    for epoch in range(1, epochs + 1):
        if sampling is Sampling.WITH_REPLACEMENT:
            order = rng.integers(0, labels.n, size=labels.n)
        else:
            order = rng.permutation(labels.n)
        for j in order.tolist():
            state.iteration += 1
            candidate = sa_update(state, labels.item_observations(j), eta(schedule, state.iteration))
            if projection:
                stats, family = project(candidate, state.family)
                if family.t != state.family.t:
                    events.append(ProjectionEvent(state.iteration, family.t))
                    logger.debug("projection reset at iteration %d (t=%d)", state.iteration, family.t)
                state.stats, state.family = stats, family
            else:
                state.stats = StatTensor(candidate)
            state.confusion = normalize(state.stats)
        final = posterior_all(state.confusion, labels, threads)
        trajectory.append(record(epoch, final))

    if events:
        logger.info("projection reset the state %d time(s)", len(events))
    return OnlineResult(state.confusion, state.stats, final, trajectory, events)
