"""Newline-delimited JSON stores with a self-describing header line.

Every artifact file the pipeline emits uses this layout:

    {"format": "<name>", "version": 1, ...header fields...}
    {...record...}
    {...record...}

Writers are deterministic (sorted keys) so identical inputs produce
byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable, Iterator

from .errors import MalformedDocument

FORMAT_VERSION = 1


def dumps_line(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_ndjson(path: str | Path, header: dict, rows: Iterable[dict]) -> int:
    """Write header + rows; returns the number of rows written."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with path.open("w", encoding="utf-8") as fh:
        fh.write(dumps_line(header) + "\n")
        for row in rows:
            fh.write(dumps_line(row) + "\n")
            n += 1
    return n


def read_ndjson(path: str | Path) -> tuple[dict, list[dict]]:
    """Read header + rows. Raises MalformedDocument on non-JSON lines."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        lines = [ln for ln in (l.rstrip("\n") for l in fh) if ln.strip()]
    if not lines:
        raise MalformedDocument(f"{path}: empty file")
    try:
        header = json.loads(lines[0])
        rows = [json.loads(ln) for ln in lines[1:]]
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"{path}: invalid JSON line: {exc}") from exc
    if not isinstance(header, dict) or "format" not in header:
        raise MalformedDocument(f"{path}: missing format header line")
    return header, rows


def iter_ndjson(path: str | Path) -> Iterator[dict]:
    """Stream rows (header skipped) for large stores."""
    _, rows = read_ndjson(path)
    yield from rows
