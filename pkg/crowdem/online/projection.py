"""
The projection safeguard: a growing family of boxes [eps_t, 1 - eps_t]^(m x k x k)
with eps_t = 2^-(t+2). Whenever a candidate state leaves the current box it is
reset to a fixed point of the base box and the box index t moves up by one.
"""

import logging
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from crowdem.errors import InvariantError
from crowdem.model.types import StatTensor

__all__ = ["ProjectionFamily", "ProjectionEvent", "project", "box_epsilon"]

logger = logging.getLogger(__name__)


def box_epsilon(t: int) -> float:
    return 2.0 ** -(t + 2)


class ProjectionEvent(NamedTuple):
    iteration: int
    t: int


@dataclass(frozen=True)
class ProjectionFamily:
    """
    Box family with its reset point and the current box index t.

    The reset point must lie in the base box (every entry in [0.25, 0.75]); the
    default is the all-0.5 tensor.
    """

    reset: StatTensor
    t: int = 0

    def __post_init__(self):
        if self.t < 0:
            raise InvariantError(f"box index must be >= 0, got {self.t}")
        if not self.contains(self.reset.values, 0):
            raise InvariantError("reset point must lie in the base box [0.25, 0.75]^(m x k x k)")

    @classmethod
    def centered(cls, m: int, k: int) -> "ProjectionFamily":
        return cls(StatTensor.full(m, k, 0.5))

    @property
    def epsilon(self) -> float:
        return box_epsilon(self.t)

    @staticmethod
    def contains(values: np.ndarray, t: int) -> bool:
        eps = box_epsilon(t)
        return bool(np.all((values >= eps) & (values <= 1 - eps)))


def project(candidate, family: ProjectionFamily) -> tuple[StatTensor, ProjectionFamily]:
    """
    Keeps the candidate if it lies in K_t, otherwise resets it.

    Args:
        candidate: The candidate statistic (array or StatTensor).
        family: The current box family.

    Returns:
        (candidate, family) unchanged when inside K_t; else
        (family.reset, family with t + 1).
    """
    values = candidate.values if isinstance(candidate, StatTensor) else np.asarray(candidate)
    if family.contains(values, family.t):
        state = candidate if isinstance(candidate, StatTensor) else StatTensor(values)
        return state, family
    logger.debug("candidate left K_%d (eps=%g); resetting", family.t, family.epsilon)
    return family.reset, replace(family, t=family.t + 1)
