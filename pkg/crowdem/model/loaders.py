"""CSV readers and writers for crowd labels, ground truth and predictions."""

import csv
import logging
from collections.abc import Iterable, Sequence
from typing import IO, Final

from crowdem.errors import DataFormatError
from crowdem.model.types import GroundTruth, LabelSet

__all__ = [
    "LABELS_HEADER",
    "TRUTH_HEADER",
    "load_labels",
    "load_ground_truth",
    "write_labels",
    "write_ground_truth",
    "write_predictions",
]

logger = logging.getLogger(__name__)

LABELS_HEADER: Final[tuple[str, ...]] = ("item", "worker", "label")
TRUTH_HEADER: Final[tuple[str, ...]] = ("item", "label")


def _rows(source: IO[str], header: tuple[str, ...]) -> Iterable[tuple[int, list[str]]]:
    """Yields (line number, fields) after checking the header; blank lines are skipped."""
    reader = csv.reader(source)
    for row in reader:
        if not row or all(not field.strip() for field in row):
            continue
        found = tuple(field.strip().lstrip("\ufeff").lower() for field in row)
        if found != header:
            raise DataFormatError(
                f"expected header '{','.join(header)}', got '{','.join(row)}'",
                line=reader.line_num,
            )
        break
    else:
        raise DataFormatError(f"missing header '{','.join(header)}'", line=1)

    for row in reader:
        if not row or all(not field.strip() for field in row):
            continue
        fields = [field.strip() for field in row]
        if len(fields) != len(header):
            raise DataFormatError(
                f"expected {len(header)} fields, got {len(fields)}", line=reader.line_num)
        if any(not field for field in fields):
            raise DataFormatError("empty field", line=reader.line_num)
        yield reader.line_num, fields


def _parse_label(text: str, line: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise DataFormatError(f"label '{text}' is not an integer", line=line) from None


def load_labels(source: IO[str], declared_k: int | None = None) -> LabelSet:
    """
    Reads an ``item,worker,label`` CSV stream into a LabelSet.

    Args:
        source: A text stream positioned at the header row.
        declared_k: The class count. When omitted, the largest observed
            label is used (a class may be absent from the data).

    Returns:
        A LabelSet whose worker and item ids are indexed in order of first
        appearance.

    Raises:
        DataFormatError: On a malformed row, a label below 1 or above
            declared_k, or a repeated (worker, item) pair; the error carries
            the offending line number.
    """
    if declared_k is not None and declared_k < 1:
        raise DataFormatError(f"declared class count must be >= 1, got {declared_k}")

    rows = []
    seen: dict[tuple[str, str], int] = {}
    for line, (item_id, worker_id, label_text) in _rows(source, LABELS_HEADER):
        label = _parse_label(label_text, line)
        if label < 1:
            raise DataFormatError(f"label {label} is below 1", line=line)
        if declared_k is not None and label > declared_k:
            raise DataFormatError(
                f"label {label} exceeds the declared class count {declared_k}", line=line)
        first = seen.setdefault((worker_id, item_id), line)
        if first != line:
            raise DataFormatError(
                f"worker '{worker_id}' already labeled item '{item_id}' at line {first}",
                line=line)
        rows.append((item_id, worker_id, label))

    if declared_k is None and not rows:
        raise DataFormatError("no labels found and no class count declared")
    labelset = LabelSet.from_rows(rows, k=declared_k)
    logger.info("Loaded %d labels: m=%d workers, n=%d items, k=%d",
                labelset.num_observations, labelset.m, labelset.n, labelset.k)
    return labelset


def load_ground_truth(source: IO[str], labelset: LabelSet) -> GroundTruth:
    """
    Reads an ``item,label`` CSV stream of true labels for (a subset of) the items of labelset.

    Raises:
        DataFormatError: On an unknown item id, a label outside 1..k, a
            repeated item or a malformed row.
    """
    truth: dict[int, int] = {}
    for line, (item_id, label_text) in _rows(source, TRUTH_HEADER):
        label = _parse_label(label_text, line)
        j = labelset.item_lookup.get(item_id)
        if j is None:
            raise DataFormatError(f"unknown item id '{item_id}'", line=line)
        if not 1 <= label <= labelset.k:
            raise DataFormatError(
                f"true label {label} of item '{item_id}' outside 1..{labelset.k}", line=line)
        if j in truth:
            raise DataFormatError(f"item '{item_id}' listed twice", line=line)
        truth[j] = label
    logger.info("Loaded ground truth for %d of %d items", len(truth), labelset.n)
    return GroundTruth(truth, n=labelset.n, k=labelset.k)


def write_labels(labelset: LabelSet, sink: IO[str]) -> None:
    """Writes labelset in the ``item,worker,label`` format, observations in storage order."""
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(LABELS_HEADER)
    for i, j, g in labelset.observations():
        writer.writerow((labelset.item_ids[j], labelset.worker_ids[i], g))


def write_ground_truth(truth: GroundTruth, labelset: LabelSet, sink: IO[str]) -> None:
    """Writes truth in the ``item,label`` format, ordered by item index."""
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(TRUTH_HEADER)
    for j in sorted(truth.labels):
        writer.writerow((labelset.item_ids[j], truth[j]))


def write_predictions(predicted: Sequence[int], labelset: LabelSet, sink: IO[str]) -> None:
    """Writes one ``item,label`` row per item of labelset."""
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(TRUTH_HEADER)
    for item_id, label in zip(labelset.item_ids, predicted):
        writer.writerow((item_id, int(label)))
