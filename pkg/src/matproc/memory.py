"""Train-partition process memory: summaries, transition statistics,
prefix-continuation index, and a step library for context matching.

The prefix index stores every contiguous activity window up to
``max_prefix_len`` labels mapped to its immediate successor, which makes
the longest-stored-suffix backoff in :func:`next_distribution` effective
on routes the memory has never seen from the start.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .canon import canon_label
from .errors import EmptyLibrary, EmptyTrainSet, MalformedDocument
from .jsonio import FORMAT_VERSION, read_ndjson, write_ndjson
from .provgraph import (
    ProcessGraph,
    precursor_labels,
    product_labels,
    route_labels,
    step_material_inputs,
    step_material_outputs,
    step_tool_labels,
)

MEMORY_FORMAT = "matproc-memory"
DEFAULT_MAX_PREFIX_LEN = 4
DEFAULT_MATCH_WEIGHTS = (1.0, 0.5, 0.25, 0.25)


def jaccard(a, b) -> float:
    """Set overlap; two empty sets count as a perfect match."""
    sa, sb = set(a), set(b)
    if not sa and not sb:
        return 1.0
    return len(sa & sb) / len(sa | sb)


@dataclass
class ProcessSummary:
    graph_id: str
    route: list[str]
    precursors: list[str]
    products: list[str]
    tools: list[str]

    @property
    def route_length(self) -> int:
        return len(self.route)

    def to_dict(self) -> dict:
        return {
            "graph_id": self.graph_id,
            "route": list(self.route),
            "precursors": list(self.precursors),
            "products": list(self.products),
            "tools": list(self.tools),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProcessSummary":
        return cls(
            graph_id=d["graph_id"],
            route=list(d["route"]),
            precursors=list(d["precursors"]),
            products=list(d["products"]),
            tools=list(d["tools"]),
        )


@dataclass
class StepEntry:
    graph_id: str
    activity: str
    position: int
    norm_position: float
    prev_activity: str | None = None
    next_activity: str | None = None
    tools: list[str] = field(default_factory=list)
    conditions: dict[str, str] = field(default_factory=dict)
    input_labels: list[str] = field(default_factory=list)
    input_forms: list[str] = field(default_factory=list)
    output_labels: list[str] = field(default_factory=list)
    output_forms: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "graph_id": self.graph_id,
            "activity": self.activity,
            "position": self.position,
            "norm_position": self.norm_position,
            "prev_activity": self.prev_activity,
            "next_activity": self.next_activity,
            "tools": list(self.tools),
            "conditions": dict(self.conditions),
            "input_labels": list(self.input_labels),
            "input_forms": list(self.input_forms),
            "output_labels": list(self.output_labels),
            "output_forms": list(self.output_forms),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StepEntry":
        return cls(
            graph_id=d["graph_id"],
            activity=d["activity"],
            position=int(d["position"]),
            norm_position=float(d["norm_position"]),
            prev_activity=d.get("prev_activity"),
            next_activity=d.get("next_activity"),
            tools=list(d.get("tools", [])),
            conditions=dict(d.get("conditions", {})),
            input_labels=list(d.get("input_labels", [])),
            input_forms=list(d.get("input_forms", [])),
            output_labels=list(d.get("output_labels", [])),
            output_forms=list(d.get("output_forms", [])),
        )


@dataclass
class StepQuery:
    """The visible context of a target step, shaped like a StepEntry."""

    activity: str | None = None
    prev_activity: str | None = None
    next_activity: str | None = None
    norm_position: float | None = None
    input_forms: list[str] = field(default_factory=list)

    def neighbour_labels(self) -> set[str]:
        return {x for x in (self.prev_activity, self.next_activity) if x}


@dataclass
class NextDistribution:
    probs: dict[str, float]
    backoff: int  # 0 exact, n suffix hops, -1 unigram fallback
    total: int  # observations behind the matched context
    vocab_size: int

    def smoothing_floor(self) -> float:
        return 1.0 / (self.total + self.vocab_size) if self.vocab_size else 0.0

    def mass(self, label: str) -> float:
        return self.probs.get(label, self.smoothing_floor())


@dataclass
class ProcessMemory:
    split_id: str = ""
    max_prefix_len: int = DEFAULT_MAX_PREFIX_LEN
    processes: list[ProcessSummary] = field(default_factory=list)
    step_library: list[StepEntry] = field(default_factory=list)
    transition_table: dict[tuple[str, str], int] = field(default_factory=dict)
    prefix_index: dict[tuple[str, ...], Counter] = field(default_factory=dict)
    embedding_store: dict[str, dict[str, list[float]]] = field(default_factory=dict)

    def graph_ids(self) -> set[str]:
        return {p.graph_id for p in self.processes}

    def by_graph_id(self) -> dict[str, ProcessSummary]:
        return {p.graph_id: p for p in self.processes}

    def vocab(self) -> set[str]:
        labels = {label for p in self.processes for label in p.route}
        return labels

    def total_out(self, label: str) -> int:
        return sum(c for (a, _), c in self.transition_table.items() if a == label)

    def total_in(self, label: str) -> int:
        return sum(c for (_, b), c in self.transition_table.items() if b == label)


def build_memory(
    train_graphs: list[ProcessGraph],
    split_id: str = "",
    max_prefix_len: int = DEFAULT_MAX_PREFIX_LEN,
    allowed_graph_ids: set[str] | None = None,
) -> ProcessMemory:
    """Fold the training graphs into an immutable memory.

    ``allowed_graph_ids`` is the train-only provenance guard: when given,
    any graph outside it is a hard error, not a silent inclusion.
    """
    if not train_graphs:
        raise EmptyTrainSet("process memory needs at least one training graph")
    if allowed_graph_ids is not None:
        strangers = [g.record_id for g in train_graphs if g.record_id not in allowed_graph_ids]
        if strangers:
            raise MalformedDocument(f"graphs outside the train partition: {strangers[:3]}")
    memory = ProcessMemory(split_id=split_id, max_prefix_len=max_prefix_len)
    for g in train_graphs:
        route = route_labels(g)
        memory.processes.append(
            ProcessSummary(
                graph_id=g.record_id,
                route=route,
                precursors=precursor_labels(g),
                products=product_labels(g),
                tools=sorted({canon_label(t.label) for t in g.tool_entities}),
            )
        )
        length = len(route)
        for pos, act in enumerate(g.ordered_activities()):
            in_labels, in_forms = step_material_inputs(g, act.id)
            out_labels, out_forms = step_material_outputs(g, act.id)
            memory.step_library.append(
                StepEntry(
                    graph_id=g.record_id,
                    activity=route[pos],
                    position=pos,
                    norm_position=pos / (length - 1) if length > 1 else 0.0,
                    prev_activity=route[pos - 1] if pos > 0 else None,
                    next_activity=route[pos + 1] if pos < length - 1 else None,
                    tools=step_tool_labels(g, act.id),
                    conditions=dict(act.conditions),
                    input_labels=in_labels,
                    input_forms=in_forms,
                    output_labels=out_labels,
                    output_forms=out_forms,
                )
            )
        for a, b in zip(route, route[1:]):
            memory.transition_table[(a, b)] = memory.transition_table.get((a, b), 0) + 1
        for width in range(1, max_prefix_len + 1):
            for start in range(0, length - width):
                window = tuple(route[start : start + width])
                memory.prefix_index.setdefault(window, Counter())[route[start + width]] += 1
    return memory


def next_distribution(memory: ProcessMemory, prefix) -> NextDistribution:
    """Continuation distribution with longest-stored-suffix backoff.

    Exact window hit -> backoff 0; each dropped leading label adds 1; a
    total miss falls back to the unigram successor marginal (backoff -1);
    a memory with no transitions at all yields uniform over known labels.
    """
    vocab = memory.vocab()
    query = tuple(canon_label(x) for x in prefix)[-memory.max_prefix_len :]
    for hop in range(len(query)):
        window = query[hop:]
        counts = memory.prefix_index.get(window)
        if counts:
            total = sum(counts.values())
            return NextDistribution(
                probs={label: c / total for label, c in sorted(counts.items())},
                backoff=hop,
                total=total,
                vocab_size=len(vocab),
            )
    unigram = Counter()
    for (_, b), c in memory.transition_table.items():
        unigram[b] += c
    if unigram:
        total = sum(unigram.values())
        return NextDistribution(
            probs={label: c / total for label, c in sorted(unigram.items())},
            backoff=-1,
            total=total,
            vocab_size=len(vocab),
        )
    labels = sorted(vocab)
    return NextDistribution(
        probs={label: 1.0 / len(labels) for label in labels} if labels else {},
        backoff=-1,
        total=0,
        vocab_size=len(labels),
    )


def match_steps(
    memory: ProcessMemory,
    query: StepQuery,
    top_m: int = 8,
    weights: tuple[float, float, float, float] = DEFAULT_MATCH_WEIGHTS,
) -> list[tuple[float, StepEntry]]:
    """Rank step-library entries by additive context compatibility.

    score = w1*[same activity] + w2*J(neighbours) + w3*(1-|d norm position|)
          + w4*J(input forms); ties broken by (graph_id, position).
    """
    if not memory.step_library:
        raise EmptyLibrary("step matching requested against an empty library")
    w1, w2, w3, w4 = weights
    q_neighbours = query.neighbour_labels()
    scored = []
    for entry in memory.step_library:
        score = 0.0
        if query.activity is not None and entry.activity == query.activity:
            score += w1
        entry_neighbours = {x for x in (entry.prev_activity, entry.next_activity) if x}
        score += w2 * jaccard(q_neighbours, entry_neighbours)
        if query.norm_position is not None:
            score += w3 * (1.0 - abs(query.norm_position - entry.norm_position))
        score += w4 * jaccard(query.input_forms, entry.input_forms)
        scored.append((score, entry))
    scored.sort(key=lambda pair: (-pair[0], pair[1].graph_id, pair[1].position))
    return scored[:top_m]


# --- linearization -------------------------------------------------------------

LINEARIZATION_VERSION = "lin-1"


def linearize_steps(route: list[str], conditions_per_step: list[dict]) -> str:
    clauses = []
    for label, conditions in zip(route, conditions_per_step):
        if conditions:
            inner = "; ".join(f"{k}={conditions[k]}" for k in sorted(conditions))
            clauses.append(f"{label}({inner})")
        else:
            clauses.append(label)
    return " -> ".join(clauses)


def linearize_parts(
    precursors=(), route_text: str = "", tools=(), products=()
) -> str:
    parts = []
    if precursors:
        parts.append("precursors: " + ", ".join(precursors))
    if route_text:
        parts.append("route: " + route_text)
    if tools:
        parts.append("tools: " + ", ".join(tools))
    if products:
        parts.append("product: " + ", ".join(products))
    return " | ".join(parts)


def linearize_process(memory: ProcessMemory, graph_id: str) -> str:
    """Deterministic text rendering of one stored process."""
    summary = memory.by_graph_id()[graph_id]
    steps = sorted(
        (e for e in memory.step_library if e.graph_id == graph_id),
        key=lambda e: e.position,
    )
    route_text = linearize_steps(summary.route, [e.conditions for e in steps])
    return linearize_parts(
        precursors=summary.precursors,
        route_text=route_text,
        tools=summary.tools,
        products=summary.products,
    )


# --- persistence -----------------------------------------------------------------

def save_memory(path: str | Path, memory: ProcessMemory, config_hash: str = "") -> int:
    header = {
        "format": MEMORY_FORMAT,
        "version": FORMAT_VERSION,
        "tool_version": __version__,
        "config_hash": config_hash,
        "split_id": memory.split_id,
        "max_prefix_len": memory.max_prefix_len,
        "linearization": LINEARIZATION_VERSION,
    }
    rows: list[dict] = []
    for p in memory.processes:
        row = {"kind": "process", **p.to_dict()}
        vectors = memory.embedding_store.get(p.graph_id)
        if vectors:
            row["embeddings"] = vectors
        rows.append(row)
    rows.extend({"kind": "step", **e.to_dict()} for e in memory.step_library)
    rows.extend(
        {"kind": "transition", "a": a, "b": b, "count": c}
        for (a, b), c in sorted(memory.transition_table.items())
    )
    rows.extend(
        {"kind": "prefix", "prefix": list(window), "next": dict(sorted(counts.items()))}
        for window, counts in sorted(memory.prefix_index.items())
    )
    return write_ndjson(path, header, rows)


def load_memory(path: str | Path) -> ProcessMemory:
    header, rows = read_ndjson(path)
    if header.get("format") != MEMORY_FORMAT:
        raise MalformedDocument(f"{path}: not a process-memory file")
    memory = ProcessMemory(
        split_id=header.get("split_id", ""),
        max_prefix_len=int(header.get("max_prefix_len", DEFAULT_MAX_PREFIX_LEN)),
    )
    for row in rows:
        kind = row.pop("kind")
        if kind == "process":
            embeddings = row.pop("embeddings", None)
            memory.processes.append(ProcessSummary.from_dict(row))
            if embeddings:
                memory.embedding_store[row["graph_id"]] = embeddings
        elif kind == "step":
            memory.step_library.append(StepEntry.from_dict(row))
        elif kind == "transition":
            memory.transition_table[(row["a"], row["b"])] = int(row["count"])
        elif kind == "prefix":
            memory.prefix_index[tuple(row["prefix"])] = Counter(row["next"])
        else:
            raise MalformedDocument(f"{path}: unknown row kind {kind!r}")
    return memory
