"""
Step-size schedules for the online update.

Both families satisfy 0 < eta_j < 1, sum eta_j = inf and sum eta_j^2 < inf:

- Online1: eta_j = 1 / (a j + b), with a, b > 0 and 1 / (a + b) < 1.
- Online2: eta_j = b / j^a, with 0.5 < a <= 1 and 0 < b < 1.
"""

import logging
import math
from enum import Enum
from typing import Final

import numpy as np

from crowdem.errors import ScheduleError

__all__ = ["ScheduleKind", "StepSchedule", "eta", "eta_sum_lower_bound", "eta_square_sum_bound"]

logger = logging.getLogger(__name__)


class ScheduleKind(Enum):
    ONLINE1 = "online1"
    ONLINE2 = "online2"


class StepSchedule:
    """
    A learning-rate rule eta_j with its two tunables.

    Parameters outside the accepted region are rejected at construction
    with a ScheduleError; Online2 with a = 1 is accepted but logged as a
    boundary setting.
    """

    def __init__(self, kind: ScheduleKind | str, a: float, b: float):
        self.kind: Final[ScheduleKind] = ScheduleKind(kind)
        self.a: Final[float] = float(a)
        self.b: Final[float] = float(b)
        self._validate()

    def _validate(self) -> None:
        a, b = self.a, self.b
        if not (math.isfinite(a) and math.isfinite(b)):
            raise ScheduleError(f"{self.kind.value}: a and b must be finite")
        if self.kind is ScheduleKind.ONLINE1:
            if a <= 0 or b <= 0:
                raise ScheduleError(f"online1 needs a > 0 and b > 0, got a={a}, b={b}")
            if 1.0 / (a + b) >= 1:
                raise ScheduleError(f"online1 needs eta_1 = 1/(a+b) < 1, got a+b={a + b}")
        else:
            if not 0.5 < a <= 1:
                raise ScheduleError(f"online2 needs 0.5 < a < 1, got a={a}")
            if not 0 < b < 1:
                raise ScheduleError(f"online2 needs 0 < b < 1 (eta_1 = b), got b={b}")
            if a == 1:
                logger.warning("online2 with a = 1 sits on the boundary of 0.5 < a < 1")

    def __call__(self, j):
        return eta(self, j)

    def __repr__(self):
        return f"StepSchedule({self.kind.value}, a={self.a!r}, b={self.b!r})"


def eta(schedule: StepSchedule, j):
    """
    The step size at iteration j >= 1.

    j may be an int or an integer array; arrays are evaluated elementwise.
    """
    if np.any(np.asarray(j) < 1):
        raise ScheduleError("iteration index must be >= 1")
    if isinstance(j, (int, np.integer)):
        j = float(j)
        if schedule.kind is ScheduleKind.ONLINE1:
            return 1.0 / (schedule.a * j + schedule.b)
        return schedule.b / j ** schedule.a
    j = np.asarray(j, dtype=np.float64)
    if schedule.kind is ScheduleKind.ONLINE1:
        return 1.0 / (schedule.a * j + schedule.b)
    return schedule.b / j ** schedule.a


def eta_sum_lower_bound(schedule: StepSchedule, n: int) -> float:
    """
    Closed-form lower bound on sum_{j<=n} eta_j from the integral of the
    decreasing step function over [1, n + 1]. It grows without limit in n.
    """
    a, b = schedule.a, schedule.b
    if schedule.kind is ScheduleKind.ONLINE1:
        return (math.log(a * (n + 1) + b) - math.log(a + b)) / a
    if a == 1:
        return b * math.log(n + 1)
    return b * ((n + 1) ** (1 - a) - 1) / (1 - a)


def eta_square_sum_bound(schedule: StepSchedule) -> float:
    """Analytic upper bound on sum_{j>=1} eta_j^2: the first term plus the integral tail from 1."""
    a, b = schedule.a, schedule.b
    if schedule.kind is ScheduleKind.ONLINE1:
        return 1.0 / (a + b) ** 2 + 1.0 / (a * (a + b))
    return b ** 2 * (1 + 1 / (2 * a - 1))
