"""Deterministic CSV and JSON file handling for the command-line tool.

Matrix CSVs are comma-delimited with values printed to 17 significant
digits, which round-trips float64 exactly. JSON is serialized with sorted
keys so identical inputs produce identical bytes. All writes go through a
temp-file rename, so partially written files are never observed.
"""

from __future__ import annotations

import datetime
import json
import os
import tempfile

import numpy as np

from . import __version__
from .errors import ConfigError, MatrixParseError

REPORT_KEYS = ("meta", "inputs", "results", "errors")
META_KEYS = ("version", "seed", "timestamp")

_FLOAT_FMT = "%.17g"


def atomic_write_text(path: str, text: str) -> None:
    """Write ``text`` to ``path`` via a temp file and rename in one step."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_matrix_csv(a: np.ndarray, header: list | None = None) -> str:
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    lines = []
    if header is not None:
        lines.append(",".join(header))
    for row in a:
        lines.append(",".join(_FLOAT_FMT % v for v in row))
    return "\n".join(lines) + "\n"


def write_matrix_csv(path: str, a: np.ndarray, header: list | None = None) -> None:
    atomic_write_text(path, format_matrix_csv(a, header))


def read_matrix_csv(path: str, skip_header: bool = False) -> np.ndarray:
    """Parse a rectangular CSV of floats; report failures with line numbers."""
    with open(path, encoding="utf-8") as handle:
        raw_lines = handle.read().splitlines()
    rows = []
    width = None
    start = 1 if skip_header else 0
    if skip_header and not raw_lines:
        raise MatrixParseError("expected a header row in an empty file", path, 1)
    for lineno, line in enumerate(raw_lines[start:], start=start + 1):
        if line.strip() == "":
            raise MatrixParseError("blank line inside matrix", path, lineno)
        fields = line.split(",")
        if width is None:
            width = len(fields)
        elif len(fields) != width:
            raise MatrixParseError(
                f"expected {width} fields, found {len(fields)}", path, lineno
            )
        try:
            rows.append([float(f) for f in fields])
        except ValueError:
            raise MatrixParseError(f"non-numeric field in row: {line!r}", path, lineno)
    if not rows:
        raise MatrixParseError("file contains no data rows", path, len(raw_lines) or 1)
    return np.asarray(rows, dtype=np.float64)


def write_table_csv(path: str, header: list, rows: list) -> None:
    """Write a small named-column table; floats use the full-precision format."""
    lines = [",".join(header)]
    for row in rows:
        fields = []
        for v in row:
            if isinstance(v, float) or isinstance(v, np.floating):
                fields.append(_FLOAT_FMT % v)
            else:
                fields.append(str(v))
        lines.append(",".join(fields))
    atomic_write_text(path, "\n".join(lines) + "\n")


def dumps_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def write_json(path: str, obj) -> None:
    atomic_write_text(path, dumps_json(obj))


def read_json(path: str):
    with open(path, encoding="utf-8") as handle:
        text = handle.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc


def deterministic_timestamp() -> str:
    """ISO-8601 timestamp derived from SOURCE_DATE_EPOCH (default epoch 0).

    Wall-clock time would break the byte-identical rerun contract, so the
    timestamp is pinned unless the caller opts into a real one through the
    environment.
    """
    raw = os.environ.get("SOURCE_DATE_EPOCH", "0")
    try:
        epoch = int(raw)
    except ValueError as exc:
        raise ConfigError(f"SOURCE_DATE_EPOCH must be an integer, got {raw!r}") from exc
    moment = datetime.datetime.fromtimestamp(epoch, tz=datetime.timezone.utc)
    return moment.isoformat().replace("+00:00", "Z")


def make_meta(seed) -> dict:
    return {
        "version": __version__,
        "seed": None if seed is None else int(seed),
        "timestamp": deterministic_timestamp(),
    }


def make_report(seed, inputs: dict, results, errors: list | None = None) -> dict:
    return {
        "meta": make_meta(seed),
        "inputs": inputs,
        "results": results,
        "errors": [] if errors is None else errors,
    }


def read_report(path: str) -> dict:
    """Load a report file, rejecting unknown top-level or meta keys."""
    doc = read_json(path)
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: report must be a JSON object")
    unknown = set(doc) - set(REPORT_KEYS)
    if unknown:
        raise ConfigError(f"{path}: unknown report keys: {sorted(unknown)}")
    missing = set(REPORT_KEYS) - set(doc)
    if missing:
        raise ConfigError(f"{path}: missing report keys: {sorted(missing)}")
    meta = doc["meta"]
    if not isinstance(meta, dict):
        raise ConfigError(f"{path}: report meta must be an object")
    unknown_meta = set(meta) - set(META_KEYS)
    if unknown_meta:
        raise ConfigError(f"{path}: unknown meta keys: {sorted(unknown_meta)}")
    return doc
