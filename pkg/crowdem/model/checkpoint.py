"""
Line-oriented text checkpoints for confusion tensors.

Format: a first line ``m k``, then m*k lines of k space-separated decimals
ordered by worker index, then true-class index. Values are written with 17
significant digits, which round-trips every double exactly.
"""

import logging
from typing import IO, Final

import numpy as np

from crowdem.errors import CheckpointError, InvariantError
from crowdem.model.types import ROW_SUM_ATOL, ConfusionTensor

__all__ = ["save_checkpoint", "load_checkpoint", "CHECKPOINT_ROW_SUM_ATOL"]

logger = logging.getLogger(__name__)

CHECKPOINT_ROW_SUM_ATOL: Final[float] = 1e-9


def _format(value: float) -> str:
    return format(value, ".17g")


def save_checkpoint(c: ConfusionTensor, sink: IO[str]) -> None:
    sink.write(f"{c.m} {c.k}\n")
    for i in range(c.m):
        for l in range(c.k):
            sink.write(" ".join(_format(v) for v in c.values[i, l].tolist()))
            sink.write("\n")


def load_checkpoint(source: IO[str]) -> ConfusionTensor:
    """
    Reads a checkpoint written by :func:`save_checkpoint`.

    Rows that pass the 1e-9 check are rescaled to sum to 1 within the
    tolerance every in-memory ConfusionTensor keeps.

    Raises:
        CheckpointError: On a dimension mismatch, a row whose sum is off by
            more than 1e-9, or a non-positive entry. Line numbers are 1-based.
    """
    lines = [(number, text.strip()) for number, text in enumerate(source, start=1)]
    lines = [(number, text) for number, text in lines if text]
    if not lines:
        raise CheckpointError("empty checkpoint", line=1)

    number, header = lines[0]
    try:
        m, k = (int(field) for field in header.split())
    except ValueError:
        raise CheckpointError(f"expected 'm k' header, got '{header}'", line=number) from None
    if m < 0 or k < 1:
        raise CheckpointError(f"invalid dimensions m={m}, k={k}", line=number)

    body = lines[1:]
    if len(body) != m * k:
        raise CheckpointError(
            f"expected {m * k} rows for m={m}, k={k}, found {len(body)}",
            line=body[m * k][0] if len(body) > m * k else number)

    values = np.empty((m, k, k))
    for row, (number, text) in enumerate(body):
        fields = text.split()
        if len(fields) != k:
            raise CheckpointError(f"expected {k} values, got {len(fields)}", line=number)
        try:
            entries = [float(field) for field in fields]
        except ValueError:
            raise CheckpointError(f"non-numeric value in '{text}'", line=number) from None
        if not all(np.isfinite(entries)):
            raise CheckpointError("non-finite value", line=number)
        if min(entries) <= 0.0:
            raise CheckpointError("entries must be strictly positive", line=number)
        total = sum(entries)
        if abs(total - 1.0) > CHECKPOINT_ROW_SUM_ATOL:
            raise CheckpointError(f"row sums to {total!r}, not 1", line=number)
        values[divmod(row, k)] = entries

    # Rows already within ROW_SUM_ATOL keep their stored bits.
    sums = values.sum(axis=2, keepdims=True)
    drifted = np.abs(sums - 1.0) > ROW_SUM_ATOL
    values = np.where(drifted, values / sums, values)

    try:
        tensor = ConfusionTensor(values)
    except InvariantError as err:
        raise CheckpointError(str(err)) from err
    logger.info("Loaded checkpoint with m=%d workers, k=%d classes", m, k)
    return tensor
