"""Reading and writing prediction matrices, label files and reports."""
from __future__ import annotations

import csv
import logging
import os
import sys
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import EmptyInput, MalformedLabel, ParseError, RaggedRows
from .model import LabelVector, PredictionMatrix
from .structure import Report

logger = logging.getLogger(__name__)

_LABELS = {"-1": -1, "1": 1, "+1": 1}


def _is_numeric(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def _read_rows(path: str) -> list[tuple[int, list[str]]]:
    """Non-blank CSV rows with their 1-based line numbers."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    rows = []
    line_no = 0
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            for line_no, row in enumerate(csv.reader(f), start=1):
                cells = [cell.strip() for cell in row]
                if any(cells):
                    rows.append((line_no, cells))
    except UnicodeDecodeError as e:
        raise ParseError(f"{path} is not valid UTF-8 ({e.reason} at byte {e.start})", line_no + 1) from None
    except csv.Error as e:
        raise ParseError(f"{path}: {e}", line_no + 1) from None
    return rows


def _parse_label(cell: str, row: int, col: int) -> int:
    try:
        return _LABELS[cell]
    except KeyError:
        raise MalformedLabel(cell, row, col) from None


def load_predictions(path: str) -> PredictionMatrix:
    """Read an instances x classifiers CSV of -1/+1 labels.

    A first row containing any non-numeric cell is taken as a header of
    classifier names.
    """
    rows = _read_rows(path)
    if not rows:
        raise EmptyInput(f"{path} contains no rows")
    names = None
    if not all(_is_numeric(cell) for cell in rows[0][1]):
        names = rows[0][1]
        rows = rows[1:]
    if not rows:
        raise ParseError("header without data rows", 1)
    width = len(names) if names is not None else len(rows[0][1])
    body = np.empty((len(rows), width), dtype=np.int8)
    for k, (line_no, cells) in enumerate(rows):
        if len(cells) != width:
            raise RaggedRows(line_no, width, len(cells))
        body[k] = [_parse_label(cell, line_no, col) for col, cell in enumerate(cells, start=1)]
    print('Open:', path, file=sys.stderr)
    return PredictionMatrix(body, tuple(names) if names is not None else None)


def load_labels(path: str) -> LabelVector:
    """One -1/+1 label per line; an optional non-numeric first line is skipped."""
    rows = _read_rows(path)
    if rows and not _is_numeric(rows[0][1][0]):
        rows = rows[1:]
    if not rows:
        raise EmptyInput(f"{path} contains no labels")
    labels = []
    for line_no, cells in rows:
        if len(cells) != 1:
            raise RaggedRows(line_no, 1, len(cells))
        labels.append(_parse_label(cells[0], line_no, 1))
    print('Open:', path, file=sys.stderr)
    return LabelVector(np.array(labels, dtype=np.int8))


def _ensure_parent(path: str) -> None:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)


def write_predictions(P: PredictionMatrix, path: str) -> None:
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(P.names())
        writer.writerows(P.entries.tolist())
    print('Wrote:', path, file=sys.stderr)


def write_labels(labels: LabelVector, path: str) -> None:
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8") as f:
        for label in labels.labels.tolist():
            f.write(f"{label}\n")
    print('Wrote:', path, file=sys.stderr)


def write_label_columns(columns: Mapping[str, LabelVector], path: str) -> None:
    """One column per meta-learner, header row of method names."""
    _ensure_parent(path)
    names = list(columns)
    stacked = np.column_stack([columns[name].labels for name in names])
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(names)
        writer.writerows(stacked.tolist())
    print('Wrote:', path, file=sys.stderr)


def write_report(report: Report, path: str) -> None:
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8") as f:
        f.write(report.model_dump_json(indent=2) + "\n")
    print('Wrote:', path, file=sys.stderr)


def write_long_csv(rows: Iterable[Sequence], path: str,
                   header: Sequence[str] = ("run", "method", "metric", "value")) -> None:
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    print('Wrote:', path, file=sys.stderr)
