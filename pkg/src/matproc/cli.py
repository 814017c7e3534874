"""Command-line entry point wiring every pipeline stage.

Stages communicate only through files: synth writes raw provenance
documents, compile turns them into a graph store, genbench emits the
question set, split assigns partitions, build-memory folds the train
partition into a process memory, and eval/ablate/report consume all of
the above. Re-running any stage with identical inputs and configuration
overwrites its outputs with byte-identical files.

Exit codes: 0 success, 2 usage error, 3 data error, 4 endpoint error.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .config import RunConfig, load_config_file
from .errors import (
    ConfigConflict,
    EmptyTestPartition,
    EndpointError,
    MalformedDocument,
    MatprocError,
    UnknownCommand,
    UsageError,
)
from .jsonio import FORMAT_VERSION, read_ndjson, write_ndjson
from .memory import build_memory, load_memory, save_memory
from .provgraph import (
    FieldMap,
    SynthParams,
    compile_graph,
    generate_synthetic_corpus,
    parse_record,
    to_prov_document,
)
from .provgraph.store import load_graphs, write_graph_store
from .retrieval import attach_embeddings, get_text_embedder
from .runner import (
    EvalReport,
    evaluate,
    render_ablation_table,
    render_report,
    run_ablation,
)
from .splits import (
    SPLIT_FORMAT,
    contamination_matrix,
    read_assignment,
    render_split_report,
    split_items,
    split_report,
    write_assignment,
)
from .taskgen import GenCaps, generate_benchmark
from .taskgen.store import load_items, write_benchmark

COMMANDS = (
    "synth",
    "compile",
    "genbench",
    "split",
    "audit",
    "build-memory",
    "eval",
    "ablate",
    "report",
)

RAW_FORMAT = "matproc-raw-prov"
WARNINGS_FORMAT = "matproc-compile-warnings"
AUDIT_FORMAT = "matproc-audit"
EVAL_REPORT_FORMAT = "matproc-eval-report"
EVAL_LOG_FORMAT = "matproc-eval-log"
ABLATION_FORMAT = "matproc-ablation"


def _header(fmt: str, cfg: RunConfig, **extra) -> dict:
    return {
        "format": fmt,
        "version": FORMAT_VERSION,
        "tool_version": __version__,
        "config_hash": cfg.config_hash(),
        **extra,
    }


# --- stage handlers ---------------------------------------------------------------------


def cmd_synth(cfg: RunConfig) -> int:
    graphs = generate_synthetic_corpus(SynthParams(n_records=cfg.n_records), seed=cfg.seed)
    docs = (to_prov_document(g) for g in graphs)
    n = write_ndjson(
        cfg.path("raw"), _header(RAW_FORMAT, cfg, count=len(graphs), seed=cfg.seed), docs
    )
    print(f"wrote {n} raw provenance records -> {cfg.path('raw')}")
    return 0


def cmd_compile(cfg: RunConfig) -> int:
    _, rows = read_ndjson(cfg.path("raw"))
    field_map = FieldMap.from_dict(cfg.field_map) if cfg.field_map else None
    graphs, warning_rows = [], []
    for row in rows:
        record_id = str(row.get("@id") or row.get("record_id") or row.get("id") or "?")
        try:
            g = compile_graph(parse_record(row, field_map))
        except MatprocError as exc:
            warning_rows.append(
                {"record_id": record_id, "warning": f"excluded: {type(exc).__name__}: {exc}"}
            )
            continue
        graphs.append(g)
        warning_rows.extend({"record_id": g.record_id, "warning": w} for w in g.warnings)
    write_graph_store(cfg.path("graphs"), graphs, cfg.config_hash())
    if cfg.paths.get("warnings"):
        write_ndjson(cfg.paths["warnings"], _header(WARNINGS_FORMAT, cfg), warning_rows)
    excluded = sum(1 for w in warning_rows if w["warning"].startswith("excluded:"))
    print(
        f"compiled {len(graphs)} graphs ({excluded} records excluded) -> {cfg.path('graphs')}"
    )
    return 0


def cmd_genbench(cfg: RunConfig) -> int:
    graphs = load_graphs(cfg.path("graphs"))
    caps = GenCaps.from_dict(cfg.caps) if cfg.caps else None
    items, skip_log = generate_benchmark(
        graphs, k_options=cfg.k_options, seed=cfg.seed, caps=caps
    )
    write_benchmark(
        cfg.path("bench"),
        items,
        seed=cfg.seed,
        k_options=cfg.k_options,
        config_hash=cfg.config_hash(),
        skip_log=skip_log,
        skips_path=cfg.paths.get("skips") or None,
    )
    by_task: dict[str, int] = {}
    for it in items:
        by_task[it.task] = by_task.get(it.task, 0) + 1
    mix = ", ".join(f"{task} {n}" for task, n in sorted(by_task.items()))
    print(f"generated {len(items)} items ({mix}) -> {cfg.path('bench')}")
    return 0


def _split_kwargs(cfg: RunConfig, protocol: str) -> dict:
    if protocol == "random":
        return {"ratios": cfg.ratios}
    if protocol == "type":
        return {"held_out_class": cfg.held_out_class, "dev_ratio": cfg.dev_ratio}
    if protocol == "dual":
        return {"held_out_class": cfg.held_out_class}
    return {}


def cmd_split(cfg: RunConfig) -> int:
    items = load_items(cfg.path("bench"))
    assignment = split_items(
        items, cfg.protocol, seed=cfg.seed, **_split_kwargs(cfg, cfg.protocol)
    )
    write_assignment(cfg.path("split"), assignment, cfg.config_hash())
    print(render_split_report(split_report(assignment, items)))
    print(f"assignment -> {cfg.path('split')}")
    return 0


def _parse_pairs(pairs: str) -> list[tuple[str, str]]:
    out = []
    for chunk in pairs.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        left, sep, right = chunk.partition(":")
        if not sep or not left or not right:
            raise ConfigConflict(f"audit pair {chunk!r} must look like train_of:test_of")
        out.append((left, right))
    if not out:
        raise ConfigConflict("audit needs at least one train_of:test_of pair")
    return out


def cmd_audit(cfg: RunConfig) -> int:
    items = load_items(cfg.path("bench"))
    pairs = _parse_pairs(cfg.pairs)
    protocols = sorted({name for pair in pairs for name in pair})
    assignments = [
        split_items(items, p, seed=cfg.seed, **_split_kwargs(cfg, p)) for p in protocols
    ]
    matrix = contamination_matrix(assignments, items)
    rows = [
        {"train_of": a, "test_of": b, "fraction": matrix.entries[(a, b)]}
        for a, b in pairs
    ]
    if cfg.paths.get("report"):
        write_ndjson(cfg.paths["report"], _header(AUDIT_FORMAT, cfg), rows)
    for row in rows:
        print(
            f"contamination(train of {row['train_of']}, test of {row['test_of']}) "
            f"= {row['fraction']:.3f}"
        )
    return 0


def cmd_build_memory(cfg: RunConfig) -> int:
    graphs = load_graphs(cfg.path("graphs"))
    items = load_items(cfg.path("bench"))
    assignment = read_assignment(cfg.path("split"))
    # The memory is the train partition's process set. Graph-aligned
    # protocols (year/type/dual) put a graph's items in one partition, so
    # this is exactly the train graphs; the random protocol splits at item
    # level, and its same-graph overlap is a property the audit reports,
    # not one this stage hides.
    train_ids = {it.graph_id for it in assignment.items_in(items, "train")}
    selected = [g for g in graphs if g.record_id in train_ids]
    seed_tag = f"-seed{assignment.seed}" if assignment.seed is not None else ""
    memory = build_memory(
        selected,
        split_id=f"{assignment.protocol}{seed_tag}",
        max_prefix_len=cfg.max_prefix_len,
        allowed_graph_ids=train_ids,
    )
    if cfg.embeddings:
        embedder = get_text_embedder(
            cfg.endpoints["embed_url"] or None, cfg.endpoints["embed_token"] or None
        )
        attach_embeddings(
            memory, selected, struct_seed=cfg.struct_seed, text_embedder=embedder
        )
    save_memory(cfg.path("memory"), memory, cfg.config_hash())
    print(
        f"memory over {len(selected)} train graphs "
        f"({len(memory.step_library)} steps) -> {cfg.path('memory')}"
    )
    return 0


def _chat_client(cfg: RunConfig):
    from .chat import get_chat_client

    return get_chat_client(
        cfg.endpoints["chat_url"] or None, cfg.endpoints["chat_token"] or None
    )


def _load_predictions(path: str) -> dict[str, int]:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise MalformedDocument(f"{path}: predictions must map item_id to option index")
    return {str(k): int(v) for k, v in raw.items()}


def _eval_inputs(cfg: RunConfig):
    items = load_items(cfg.path("bench"))
    assignment = read_assignment(cfg.path("split"))
    part_items = assignment.items_in(items, cfg.partition)
    if not part_items:
        raise EmptyTestPartition(f"partition {cfg.partition!r} holds no items")
    memory = load_memory(cfg.path("memory")) if cfg.paths.get("memory") else None
    return items, assignment, part_items, memory


def cmd_eval(cfg: RunConfig) -> int:
    has_predictions = bool(cfg.paths.get("predictions"))
    if cfg.policy == "external_predictions" and not has_predictions:
        raise ConfigConflict("external_predictions needs a --predictions file")
    if has_predictions and cfg.policy != "external_predictions":
        raise ConfigConflict(
            f"--predictions only applies to external_predictions, not {cfg.policy!r}"
        )
    items, assignment, part_items, memory = _eval_inputs(cfg)
    train_items = (
        assignment.items_in(items, "train") if cfg.policy == "few_shot" else None
    )
    predictions = _load_predictions(cfg.paths["predictions"]) if has_predictions else None
    report, rows = evaluate(
        part_items,
        memory,
        cfg.policy_config(),
        client=_chat_client(cfg),
        train_items=train_items,
        predictions=predictions,
        partition=cfg.partition,
        jobs=cfg.jobs,
    )
    if cfg.paths.get("log"):
        write_ndjson(
            cfg.paths["log"],
            _header(EVAL_LOG_FORMAT, cfg, policy=cfg.policy, partition=cfg.partition),
            rows,
        )
        report.log_path = cfg.paths["log"]
    if cfg.paths.get("report"):
        write_ndjson(
            cfg.paths["report"], _header(EVAL_REPORT_FORMAT, cfg), [report.to_dict()]
        )
    print(render_report(report))
    return 0


def cmd_ablate(cfg: RunConfig) -> int:
    _, _, part_items, memory = _eval_inputs(cfg)
    if memory is None:
        raise ConfigConflict("ablate needs a --memory file")
    results = run_ablation(
        part_items,
        memory,
        base=cfg.policy_config(),
        client=_chat_client(cfg),
        axes=cfg.axes,
        jobs=cfg.jobs,
    )
    rows = [
        {"block": r["block"], "label": r["label"], "report": r["report"].to_dict()}
        for r in results
    ]
    if cfg.paths.get("report"):
        write_ndjson(cfg.paths["report"], _header(ABLATION_FORMAT, cfg), rows)
    print(render_ablation_table(results))
    return 0


def cmd_report(cfg: RunConfig) -> int:
    header, rows = read_ndjson(cfg.path("report"))
    fmt = header.get("format", "")
    if fmt == EVAL_REPORT_FORMAT:
        print(render_report(EvalReport.from_dict(rows[0])))
    elif fmt == ABLATION_FORMAT:
        results = [
            {
                "block": r["block"],
                "label": r["label"],
                "report": EvalReport.from_dict(r["report"]),
            }
            for r in rows
        ]
        print(render_ablation_table(results))
    elif fmt == AUDIT_FORMAT:
        for row in rows:
            print(
                f"contamination(train of {row['train_of']}, test of {row['test_of']}) "
                f"= {row['fraction']:.3f}"
            )
    elif fmt == SPLIT_FORMAT:
        counts: dict[str, int] = {}
        for row in rows:
            counts[row["partition"]] = counts.get(row["partition"], 0) + 1
        print(f"protocol: {header.get('protocol', '?')}")
        for name in ("train", "dev", "test", "excluded"):
            print(f"{name:<10} {counts.get(name, 0):>8}")
    else:
        raise MalformedDocument(f"no renderer for artifact format {fmt!r}")
    return 0


HANDLERS = {
    "synth": cmd_synth,
    "compile": cmd_compile,
    "genbench": cmd_genbench,
    "split": cmd_split,
    "audit": cmd_audit,
    "build-memory": cmd_build_memory,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "report": cmd_report,
}


# --- argument parsing -------------------------------------------------------------------


def _csv_floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",")]


def _csv_names(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="matproc",
        description="Synthesis-provenance benchmark toolkit: "
        "compile graphs, generate questions, split, audit, evaluate.",
    )
    parser.add_argument("--version", action="version", version=f"matproc {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def common(p):
        p.add_argument("--config", help="JSON config file merged under explicit flags")
        p.add_argument("--seed", type=int, dest="seed")
        p.add_argument("--jobs", type=int, dest="jobs")

    p = sub.add_parser("synth", help="generate a synthetic raw provenance corpus")
    common(p)
    p.add_argument("--out", dest="path_raw", help="raw records file to write")
    p.add_argument("--n", type=int, dest="n_records", help="number of records")

    p = sub.add_parser("compile", help="parse raw records into a graph store")
    common(p)
    p.add_argument("--in", dest="path_raw", help="raw records file")
    p.add_argument("--out", dest="path_graphs", help="graph store to write")
    p.add_argument("--warnings", dest="path_warnings", help="warnings/exclusions file")
    p.add_argument("--field-map", dest="field_map_file", help="JSON field-map overrides")

    p = sub.add_parser("genbench", help="generate the question set from a graph store")
    common(p)
    p.add_argument("--graphs", dest="path_graphs", help="graph store file")
    p.add_argument("--out", dest="path_bench", help="question set to write")
    p.add_argument("--skips", dest="path_skips", help="skip log to write")
    p.add_argument("--k", type=int, dest="k_options", help="options per question")
    p.add_argument("--caps", type=json.loads, dest="caps", help="per-graph caps JSON")

    p = sub.add_parser("split", help="assign questions to train/dev/test partitions")
    common(p)
    p.add_argument("--bench", dest="path_bench", help="question set file")
    p.add_argument("--out", dest="path_split", help="assignment file to write")
    p.add_argument("--protocol", dest="protocol", choices=["random", "year", "type", "dual"])
    p.add_argument("--ratios", type=_csv_floats, dest="ratios", help="train,dev,test")
    p.add_argument("--held-out-class", dest="held_out_class")
    p.add_argument("--dev-ratio", type=float, dest="dev_ratio")

    p = sub.add_parser("audit", help="cross-protocol contamination audit")
    common(p)
    p.add_argument("--bench", dest="path_bench", help="question set file")
    p.add_argument("--pairs", dest="pairs", help="train_of:test_of pairs, comma-separated")
    p.add_argument("--out", dest="path_report", help="audit table to write")
    p.add_argument("--held-out-class", dest="held_out_class")
    p.add_argument("--dev-ratio", type=float, dest="dev_ratio")

    p = sub.add_parser("build-memory", help="fold the train partition into a memory")
    common(p)
    p.add_argument("--graphs", dest="path_graphs", help="graph store file")
    p.add_argument("--bench", dest="path_bench", help="question set file")
    p.add_argument("--split", dest="path_split", help="assignment file")
    p.add_argument("--out", dest="path_memory", help="memory file to write")
    p.add_argument("--max-prefix-len", type=int, dest="max_prefix_len")
    p.add_argument("--struct-seed", type=int, dest="struct_seed")
    p.add_argument(
        "--skip-embeddings",
        action="store_const",
        const=False,
        dest="embeddings",
        help="store no text/structure vectors",
    )
    p.add_argument("--embed-url", dest="endpoint_embed_url")
    p.add_argument("--embed-token", dest="endpoint_embed_token")

    def eval_flags(p):
        p.add_argument("--bench", dest="path_bench", help="question set file")
        p.add_argument("--split", dest="path_split", help="assignment file")
        p.add_argument("--memory", dest="path_memory", help="memory file")
        p.add_argument("--partition", dest="partition", choices=["train", "dev", "test"])
        p.add_argument("--report", dest="path_report", help="report file to write")
        p.add_argument("--log", dest="path_log", help="per-item log to write")
        p.add_argument("--chat-url", dest="endpoint_chat_url")
        p.add_argument("--chat-token", dest="endpoint_chat_token")

    p = sub.add_parser("eval", help="answer one partition under one policy")
    common(p)
    eval_flags(p)
    p.add_argument("--policy", dest="policy")
    p.add_argument("--lam", type=float, dest="lam", help="symbolic weight in [0,1]")
    p.add_argument("--top-k", type=int, dest="top_k")
    p.add_argument("--predictions", dest="path_predictions", help="external answers JSON")
    p.add_argument("--no-planning", action="store_const", const=False, dest="runner_planning")
    p.add_argument("--no-fallback", action="store_const", const=False, dest="runner_fallback")
    p.add_argument(
        "--log-full-prompts",
        action="store_const",
        const=True,
        dest="runner_log_full_prompts",
    )

    p = sub.add_parser("ablate", help="run the ablation grid on one partition")
    common(p)
    eval_flags(p)
    p.add_argument("--axes", type=_csv_names, dest="axes", help="grid blocks to run")

    p = sub.add_parser("report", help="render a saved artifact as text")
    common(p)
    p.add_argument("--in", dest="path_report", help="artifact file to render")

    return parser


def _overrides_from(args: argparse.Namespace) -> dict:
    out: dict = {}
    paths: dict[str, str] = {}
    runner: dict = {}
    endpoints: dict = {}
    for dest, value in vars(args).items():
        if value is None or dest in ("command", "config"):
            continue
        if dest == "field_map_file":
            out["field_map"] = load_config_file(value)
        elif dest.startswith("path_"):
            paths[dest[len("path_"):]] = value
        elif dest.startswith("runner_"):
            runner[dest[len("runner_"):]] = value
        elif dest.startswith("endpoint_"):
            endpoints[dest[len("endpoint_"):]] = value
        else:
            out[dest] = value
    if paths:
        out["paths"] = paths
    if runner:
        out["runner"] = runner
    if endpoints:
        out["endpoints"] = endpoints
    return out


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the --config file, then explicit flags."""
    cfg = RunConfig()
    if getattr(args, "config", None):
        cfg = cfg.merged(load_config_file(args.config))
    return cfg.merged(_overrides_from(args))


def dispatch(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    try:
        if argv and not argv[0].startswith("-") and argv[0] not in COMMANDS:
            raise UnknownCommand(
                f"unknown command {argv[0]!r}; expected one of: {', '.join(COMMANDS)}"
            )
        parser = build_parser()
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:  # argparse already printed a diagnostic
            return int(exc.code or 0)
        if not args.command:
            parser.print_help()
            return 2
        cfg = resolve_config(args)
        return HANDLERS[args.command](cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EndpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except MatprocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
