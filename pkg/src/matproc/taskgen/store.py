"""Benchmark file: one item per line under a generator header."""

from __future__ import annotations

from pathlib import Path

from .. import __version__
from ..jsonio import FORMAT_VERSION, read_ndjson, write_ndjson
from .model import BenchItem

BENCH_FORMAT = "matproc-bench"
SKIP_FORMAT = "matproc-bench-skips"


def write_benchmark(
    path: str | Path,
    items: list[BenchItem],
    seed: int,
    k_options: int,
    config_hash: str = "",
    skip_log: list[dict] | None = None,
    skips_path: str | Path | None = None,
) -> int:
    header = {
        "format": BENCH_FORMAT,
        "version": FORMAT_VERSION,
        "tool_version": __version__,
        "config_hash": config_hash,
        "seed": seed,
        "k_options": k_options,
        "count": len(items),
    }
    n = write_ndjson(path, header, (it.to_dict() for it in items))
    if skips_path is not None:
        write_ndjson(
            skips_path,
            {"format": SKIP_FORMAT, "version": FORMAT_VERSION, "tool_version": __version__},
            skip_log or [],
        )
    return n


def read_benchmark(path: str | Path) -> tuple[dict, list[BenchItem]]:
    header, rows = read_ndjson(path)
    return header, [BenchItem.from_dict(r) for r in rows]


def load_items(path: str | Path) -> list[BenchItem]:
    return read_benchmark(path)[1]
