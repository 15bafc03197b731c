"""Plain-text inputs and outputs: headered CSV matrices, key=value configs,
chain CSVs and JSON summaries."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np


class InputError(ValueError):
    """Malformed or missing input file."""


def read_csv_matrix(path):
    """Read a headered numeric CSV; returns ``(header, array)``.

    Parse failures name the file, the 1-based data row and the column.
    """
    path = Path(path)
    if not path.is_file():
        raise InputError(f"input file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        rows = []
        for lineno, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise InputError(
                    f"{path}: row {lineno} has {len(row)} fields, header has {len(header)}"
                )
            vals = []
            for col, cell in zip(header, row):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise InputError(
                        f"{path}: row {lineno}, column {col!r}: cannot parse {cell!r} as a number"
                    ) from None
            rows.append(vals)
    if not rows:
        raise InputError(f"{path}: no data rows")
    return header, np.array(rows)


def write_csv_matrix(path, header, values):
    """Write a headered CSV with 17 significant digits (lossless for float64)."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    with Path(path).open("w", newline="") as fh:
        # names like B[1,2] contain commas and get quoted
        csv.writer(fh, lineterminator="\n").writerow(header)
        for row in values:
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")


def read_named_values(path):
    """Read a ``name,value`` CSV into a dict."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"input file not found: {path}")
    out = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["name", "value"]:
            raise InputError(f"{path}: expected header 'name,value'")
        for lineno, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != 2:
                raise InputError(f"{path}: row {lineno} must have 2 fields")
            try:
                out[row[0].strip()] = float(row[1])
            except ValueError:
                raise InputError(
                    f"{path}: row {lineno}, column 'value': cannot parse {row[1]!r} as a number"
                ) from None
    return out


def write_named_values(path, names, values):
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["name", "value"])
        for name, v in zip(names, values):
            writer.writerow([name, format(float(v), ".17g")])


def read_config(path):
    """Parse a ``key = value`` file; ``#`` starts a comment."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"config file not found: {path}")
    cfg = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}: line {lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise InputError(f"{path}: line {lineno}: empty key")
        cfg[key] = value
    return cfg


def write_config(path, cfg):
    with Path(path).open("w") as fh:
        for key, value in cfg.items():
            fh.write(f"{key} = {value}\n")


def write_chain(path, chain):
    write_csv_matrix(path, chain.names, chain.draws)


def read_chain(path):
    """Return ``(names, draws)`` from a chain CSV."""
    return read_csv_matrix(path)


def write_summary(path, summaries, level, extra=None):
    doc = {"level": level, "parameters": [s.to_dict() for s in summaries]}
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
