"""Partition protocols and split audits.

Four protocols: random (item-level 80/10/10), year (temporal holdout),
type (held-out material class), dual (temporal and class separation at
once, violators excluded). Non-random protocols group by DOI, so one
source paper never straddles partitions there; the random protocol is
deliberately item-level — its DOI overlap across partitions is the
leakage the contamination audit is built to expose.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .errors import EmptyTestPartition, InvalidParams
from .jsonio import FORMAT_VERSION, read_ndjson, write_ndjson
from .taskgen import BenchItem

PARTITIONS = ("train", "dev", "test", "excluded")
PROTOCOLS = ("random", "year", "type", "dual")

SPLIT_FORMAT = "matproc-split"


@dataclass
class SplitAssignment:
    protocol: str
    mapping: dict[str, str]  # item_id -> partition
    seed: int | None = None
    warnings: list[str] = field(default_factory=list)

    def partition_of(self, item_id: str) -> str:
        return self.mapping[item_id]

    def items_in(self, items: list[BenchItem], partition: str) -> list[BenchItem]:
        return [it for it in items if self.mapping[it.item_id] == partition]

    def counts(self) -> dict[str, int]:
        out = {p: 0 for p in PARTITIONS}
        for p in self.mapping.values():
            out[p] += 1
        return out


@dataclass
class ContaminationMatrix:
    entries: dict[tuple[str, str], float] = field(default_factory=dict)  # (train of, test of) -> fraction

    def to_rows(self) -> list[dict]:
        return [
            {"train_of": a, "test_of": b, "fraction": self.entries[(a, b)]}
            for (a, b) in sorted(self.entries)
        ]


def split_random(items: list[BenchItem], ratios=(0.8, 0.1, 0.1), seed: int = 0) -> SplitAssignment:
    if abs(sum(ratios) - 1.0) > 1e-9 or len(ratios) != 3:
        raise InvalidParams("ratios must be three values summing to 1")
    ids = [it.item_id for it in items]
    rng = random.Random(seed)
    rng.shuffle(ids)
    n = len(ids)
    n_train = int(ratios[0] * n)
    n_dev = int(ratios[1] * n)
    mapping = {}
    for i, item_id in enumerate(ids):
        if i < n_train:
            mapping[item_id] = "train"
        elif i < n_train + n_dev:
            mapping[item_id] = "dev"
        else:
            mapping[item_id] = "test"
    return SplitAssignment(protocol="random", mapping=mapping, seed=seed)


def split_by_year(items: list[BenchItem]) -> SplitAssignment:
    assignment = SplitAssignment(protocol="year", mapping={})
    for it in items:
        if it.year is None:
            assignment.mapping[it.item_id] = "excluded"
            assignment.warnings.append(f"{it.item_id}: no year, excluded")
        elif it.year <= 2019:
            assignment.mapping[it.item_id] = "train"
        elif it.year == 2020:
            assignment.mapping[it.item_id] = "dev"
        else:
            assignment.mapping[it.item_id] = "test"
    return assignment


def split_by_type(
    items: list[BenchItem],
    held_out_class: str = "battery",
    dev_ratio: float = 0.1,
    seed: int = 0,
) -> SplitAssignment:
    """Held-out class goes to test; the rest is split train/dev by DOI."""
    mapping: dict[str, str] = {}
    rest_dois: list[str] = []
    seen = set()
    for it in items:
        if it.material_class == held_out_class:
            mapping[it.item_id] = "test"
        elif it.doi not in seen:
            seen.add(it.doi)
            rest_dois.append(it.doi)
    rng = random.Random(seed)
    rng.shuffle(rest_dois)
    n_dev = int(dev_ratio * len(rest_dois))
    dev_dois = set(rest_dois[:n_dev])
    for it in items:
        if it.item_id not in mapping:
            mapping[it.item_id] = "dev" if it.doi in dev_dois else "train"
    return SplitAssignment(protocol="type", mapping=mapping, seed=seed)


def split_dual(items: list[BenchItem], held_out_class: str = "battery") -> SplitAssignment:
    assignment = SplitAssignment(protocol="dual", mapping={})
    for it in items:
        held = it.material_class == held_out_class
        if it.year is None:
            assignment.mapping[it.item_id] = "excluded"
            assignment.warnings.append(f"{it.item_id}: no year, excluded")
        elif not held and it.year <= 2019:
            assignment.mapping[it.item_id] = "train"
        elif not held and it.year == 2020:
            assignment.mapping[it.item_id] = "dev"
        elif held and it.year >= 2021:
            assignment.mapping[it.item_id] = "test"
        else:
            assignment.mapping[it.item_id] = "excluded"
    return assignment


def split_items(items: list[BenchItem], protocol: str, seed: int = 0, **kwargs) -> SplitAssignment:
    if protocol == "random":
        return split_random(items, seed=seed, **kwargs)
    if protocol == "year":
        return split_by_year(items)
    if protocol == "type":
        return split_by_type(items, seed=seed, **kwargs)
    if protocol == "dual":
        return split_dual(items, **kwargs)
    raise InvalidParams(f"unknown split protocol {protocol!r}")


def _partition_dois(assignment: SplitAssignment, items: list[BenchItem], partition: str) -> set[str]:
    return {
        it.doi
        for it in items
        if it.doi and assignment.mapping.get(it.item_id) == partition
    }


def contamination_matrix(
    assignments: list[SplitAssignment], items: list[BenchItem]
) -> ContaminationMatrix:
    """entry(train of A, test of B) = share of B's test DOIs seen in A's train."""
    matrix = ContaminationMatrix()
    for a in assignments:
        train_dois = _partition_dois(a, items, "train")
        for b in assignments:
            test_dois = _partition_dois(b, items, "test")
            if not test_dois:
                raise EmptyTestPartition(f"{b.protocol}: test partition has no DOIs")
            overlap = len(test_dois & train_dois) / len(test_dois)
            matrix.entries[(a.protocol, b.protocol)] = overlap
    return matrix


def split_report(assignment: SplitAssignment, items: list[BenchItem]) -> dict:
    """Per-partition counts, unique DOIs, class mix, year range."""
    partitions: dict[str, dict] = {}
    for name in PARTITIONS:
        members = assignment.items_in(items, name)
        years = [it.year for it in members if it.year is not None]
        classes: dict[str, int] = {}
        for it in members:
            classes[it.material_class] = classes.get(it.material_class, 0) + 1
        n = len(members)
        partitions[name] = {
            "count": n,
            "unique_dois": len({it.doi for it in members if it.doi}),
            "year_min": min(years) if years else None,
            "year_max": max(years) if years else None,
            "class_pct": {c: 100.0 * k / n for c, k in sorted(classes.items())} if n else {},
        }
    return {"protocol": assignment.protocol, "seed": assignment.seed, "partitions": partitions}


def render_split_report(report: dict) -> str:
    """Aligned text table, one partition per row."""
    lines = [f"protocol: {report['protocol']}"]
    head = f"{'partition':<10} {'items':>8} {'dois':>7} {'years':>12}  classes"
    lines.append(head)
    lines.append("-" * len(head))
    for name in PARTITIONS:
        row = report["partitions"][name]
        if row["year_min"] is None:
            years = "-"
        else:
            years = f"{row['year_min']}-{row['year_max']}"
        classes = ", ".join(f"{c} {pct:.2f}%" for c, pct in row["class_pct"].items()) or "-"
        lines.append(f"{name:<10} {row['count']:>8} {row['unique_dois']:>7} {years:>12}  {classes}")
    return "\n".join(lines)


def write_assignment(
    path: str | Path, assignment: SplitAssignment, config_hash: str = ""
) -> int:
    header = {
        "format": SPLIT_FORMAT,
        "version": FORMAT_VERSION,
        "tool_version": __version__,
        "config_hash": config_hash,
        "protocol": assignment.protocol,
        "seed": assignment.seed,
    }
    rows = [
        {"item_id": item_id, "partition": partition}
        for item_id, partition in sorted(assignment.mapping.items())
    ]
    return write_ndjson(path, header, rows)


def read_assignment(path: str | Path) -> SplitAssignment:
    header, rows = read_ndjson(path)
    return SplitAssignment(
        protocol=header.get("protocol", "unknown"),
        mapping={r["item_id"]: r["partition"] for r in rows},
        seed=header.get("seed"),
    )
