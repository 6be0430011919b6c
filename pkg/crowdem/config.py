"""Default tunables and environment configuration."""

import logging
import os
from dataclasses import dataclass
from typing import Final

__all__ = [
    "EMConfig",
    "OnlineConfig",
    "THREADS_ENV_VAR",
    "DEFAULT_SMOOTHING",
    "default_threads",
]

logger = logging.getLogger(__name__)

THREADS_ENV_VAR: Final[str] = "CROWDEM_THREADS"

# Additive M-step smoothing; keeps every c_ilg strictly inside (0, 1).
DEFAULT_SMOOTHING: Final[float] = 1e-9


@dataclass(frozen=True)
class EMConfig:
    max_iter: int = 50
    tol: float = 1e-8
    smoothing: float = DEFAULT_SMOOTHING
    init: str = "mv"


@dataclass(frozen=True)
class OnlineConfig:
    schedule: str = "online1"
    a: float = 2.0
    b: float = 1.5
    epochs: int = 10
    seed: int = 0
    sampling: str = "with-replacement"
    project: bool = True
    init: str = "mv"


def default_threads() -> int:
    """
    Returns the default worker-thread count for item-parallel evaluation.

    Read from the CROWDEM_THREADS environment variable; unset, empty or
    invalid values fall back to 1.
    """
    raw = os.environ.get(THREADS_ENV_VAR, "").strip()
    if not raw:
        return 1
    try:
        value = int(raw)
    except ValueError:
        logger.warning("Ignoring non-integer %s=%r", THREADS_ENV_VAR, raw)
        return 1
    if value < 1:
        logger.warning("Ignoring non-positive %s=%r", THREADS_ENV_VAR, raw)
        return 1
    return value
