"""Answer policies, split evaluation, and the ablation grid.

Policies split into three families: score-argmax (no language model),
LLM-mediated answering with optional planning and symbolic fallback,
and prompting baselines (zero-shot, few-shot, retrieval-augmented,
graph-retrieval-augmented). Two diagnostic policies bound the scale:
uniform_random and gold_oracle. All randomness is derived from
(seed, item_id) or (seed, task), so reports are reproducible.
"""

from __future__ import annotations

import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

from .canon import derive_seed, stable_hash
from .chat import MockChatClient
from .errors import (
    ClientTimeout,
    InvalidGridAxis,
    InvalidParams,
    MatprocError,
    UnknownItemId,
)
from .memory import ProcessMemory
from .prompts import build_prompt, parse_answer
from .retrieval import RetrievalWeights, retrieve, query_from_item
from .scoring import (
    OptionScores,
    ScoringConfig,
    argmax_index,
    fuse_scores,
    score_options_neural,
    score_options_symbolic,
)
from .taskgen import TASKS, BenchItem

POLICIES = (
    "argmax_symbolic",
    "argmax_neural",
    "argmax_hybrid",
    "provmind_llm",
    "zero_shot",
    "few_shot",
    "rag",
    "graphrag",
    "external_predictions",
    "uniform_random",
    "gold_oracle",
)
_NEEDS_MEMORY = ("argmax_symbolic", "argmax_neural", "argmax_hybrid",
                 "provmind_llm", "rag", "graphrag")
_LLM_POLICIES = ("provmind_llm", "zero_shot", "few_shot", "rag", "graphrag")

DEFAULT_BUDGETS = {"planning": 96, "answer": 48, "baseline": 16}


@dataclass
class PolicyConfig:
    policy: str = "argmax_hybrid"
    lam: float = 0.5
    top_k: int = 8
    weights: RetrievalWeights = field(default_factory=RetrievalWeights)
    scoring: ScoringConfig = field(default_factory=ScoringConfig)
    planning: bool = True
    fallback: bool = True
    budgets: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_BUDGETS))
    few_shot_count: int = 3
    few_shot_seed: int = 42
    rag_k: int = 3
    graph_k: int = 3
    graph_hops: int = 1
    seed: int = 0
    log_full_prompts: bool = False

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise InvalidParams(f"unknown policy {self.policy!r}")
        if not 0.0 <= self.lam <= 1.0:
            raise InvalidParams("lambda must lie in [0, 1]")
        if self.top_k < 1:
            raise InvalidParams("top_k must be >= 1")
        for name in ("planning", "answer", "baseline"):
            if self.budgets.get(name, 0) < 1:
                raise InvalidParams(f"token budget {name!r} must be positive")
        for name, value in (("few_shot_count", self.few_shot_count),
                            ("rag_k", self.rag_k), ("graph_k", self.graph_k),
                            ("graph_hops", self.graph_hops)):
            if value < 1:
                raise InvalidParams(f"{name} must be >= 1")

    def to_dict(self) -> dict:
        return {
            "policy": self.policy,
            "lam": self.lam,
            "top_k": self.top_k,
            "weights": self.weights.to_dict(),
            "scoring": self.scoring.to_dict(),
            "planning": self.planning,
            "fallback": self.fallback,
            "budgets": dict(self.budgets),
            "few_shot_count": self.few_shot_count,
            "few_shot_seed": self.few_shot_seed,
            "rag_k": self.rag_k,
            "graph_k": self.graph_k,
            "graph_hops": self.graph_hops,
            "seed": self.seed,
            "log_full_prompts": self.log_full_prompts,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PolicyConfig":
        return cls(
            policy=d.get("policy", "argmax_hybrid"),
            lam=float(d.get("lam", 0.5)),
            top_k=int(d.get("top_k", 8)),
            weights=RetrievalWeights(**d["weights"]) if "weights" in d else RetrievalWeights(),
            scoring=ScoringConfig.from_dict(d.get("scoring", {})),
            planning=bool(d.get("planning", True)),
            fallback=bool(d.get("fallback", True)),
            budgets={**DEFAULT_BUDGETS, **d.get("budgets", {})},
            few_shot_count=int(d.get("few_shot_count", 3)),
            few_shot_seed=int(d.get("few_shot_seed", 42)),
            rag_k=int(d.get("rag_k", 3)),
            graph_k=int(d.get("graph_k", 3)),
            graph_hops=int(d.get("graph_hops", 1)),
            seed=int(d.get("seed", 0)),
            log_full_prompts=bool(d.get("log_full_prompts", False)),
        )


@dataclass
class EvalReport:
    split_id: str
    policy: dict
    per_task: dict[str, dict]
    overall: dict
    wall_clock_s: float = 0.0  # human-facing only: kept out of to_dict
    log_path: str = ""

    @property
    def accuracy(self) -> float:
        return self.overall["accuracy"]

    def to_dict(self) -> dict:
        return {
            "split_id": self.split_id,
            "policy": self.policy,
            "per_task": self.per_task,
            "overall": self.overall,
            "log_path": self.log_path,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(
            split_id=d.get("split_id", ""),
            policy=dict(d.get("policy", {})),
            per_task={k: dict(v) for k, v in d.get("per_task", {}).items()},
            overall=dict(d.get("overall", {})),
            log_path=d.get("log_path", ""),
        )


def answer_argmax(scores: OptionScores) -> int:
    """Index of the highest fused score; ties go to the lowest index."""
    return argmax_index(scores.fused)


# --- per-item machinery ---------------------------------------------------------------


def _effective_lambda(config: PolicyConfig) -> float:
    if config.policy == "argmax_symbolic":
        return 1.0
    if config.policy == "argmax_neural":
        return 0.0
    return config.lam


def _score_item(item, memory, config):
    """Retrieve precedents and fuse the lanes the policy needs."""
    precedents = retrieve(query_from_item(item), memory, config.weights, config.top_k)
    lam = _effective_lambda(config)
    sym = score_options_symbolic(item, precedents, memory, config.scoring) if lam > 0 else None
    neu = score_options_neural(item, precedents, memory, config.scoring) if lam < 1 else None
    return precedents, sym, fuse_scores(sym, neu, lam)


def _hash_messages(messages: list[dict]) -> str:
    return stable_hash([(m["role"], m["content"]) for m in messages])


def _record_exchange(trace: dict, mode: str, exchange, config: PolicyConfig) -> None:
    entry = {
        "mode": mode,
        "max_new_tokens": exchange.max_new_tokens,
        "temperature": exchange.temperature,
        "prompt_sha": _hash_messages(exchange.messages),
        "response_sha": stable_hash(exchange.response_text),
    }
    if config.log_full_prompts:
        entry["messages"] = exchange.messages
        entry["response_text"] = exchange.response_text
    trace["exchanges"].append(entry)


def llm_answer(
    item: BenchItem,
    memory: ProcessMemory,
    precedents,
    evidence_scores: OptionScores,
    fallback_scores: OptionScores | None,
    client,
    config: PolicyConfig,
) -> tuple[int | None, dict]:
    """Optional plan call, answer call, parse; symbolic fallback on residue."""
    trace = {"exchanges": [], "fallback_used": False, "flags": []}
    plan_text = None
    if config.planning:
        plan_messages = build_prompt(
            item, "plan", precedents=precedents, scores=evidence_scores, memory=memory
        )
        try:
            exchange = client.complete(
                plan_messages, max_new_tokens=config.budgets["planning"], temperature=0.0
            )
            plan_text = exchange.response_text
            _record_exchange(trace, "plan", exchange, config)
        except ClientTimeout:
            trace["flags"].append("plan_timeout")

    answer_messages = build_prompt(
        item,
        "answer",
        precedents=precedents,
        scores=evidence_scores,
        memory=memory,
        plan_text=plan_text,
    )
    index: int | None = None
    try:
        exchange = client.complete(
            answer_messages, max_new_tokens=config.budgets["answer"], temperature=0.0
        )
        _record_exchange(trace, "answer", exchange, config)
        index = parse_answer(exchange.response_text, len(item.options))
        if index is None:
            trace["flags"].append("unparseable_response")
    except ClientTimeout:
        trace["flags"].append("answer_timeout")

    if index is None and config.fallback and fallback_scores is not None:
        index = answer_argmax(fallback_scores)
        trace["fallback_used"] = True
    return index, trace


def _sample_exemplars(train_items, task, config: PolicyConfig) -> list[BenchItem]:
    """Task-matched training exemplars under the few-shot sampling seed."""
    rng = random.Random(derive_seed(config.few_shot_seed, task))
    pool = sorted((it for it in train_items if it.task == task), key=lambda it: it.item_id)
    if len(pool) >= config.few_shot_count:
        return rng.sample(pool, config.few_shot_count)
    spare = sorted((it for it in train_items if it.task != task), key=lambda it: it.item_id)
    fill = rng.sample(spare, min(len(spare), config.few_shot_count - len(pool)))
    return pool + fill


def _baseline_answer(item, mode, client, config, memory=None, precedents=None,
                     exemplars=None, graph_ids=None) -> tuple[int | None, dict]:
    trace = {"exchanges": [], "fallback_used": False, "flags": []}
    messages = build_prompt(
        item,
        mode,
        precedents=precedents,
        memory=memory,
        exemplars=exemplars,
        graph_ids=graph_ids,
        few_shot_count=config.few_shot_count,
        rag_k=config.rag_k,
        graph_k=config.graph_k,
        graph_hops=config.graph_hops,
    )
    try:
        exchange = client.complete(
            messages, max_new_tokens=config.budgets["baseline"], temperature=0.0
        )
        _record_exchange(trace, mode, exchange, config)
        index = parse_answer(exchange.response_text, len(item.options))
        if index is None:
            trace["flags"].append("unparseable_response")
        return index, trace
    except ClientTimeout:
        trace["flags"].append("answer_timeout")
        return None, trace


def _answer_item(item, memory, config, client, exemplars_by_task, predictions):
    """One item -> (answer index or None, trace dict). Never raises."""
    trace: dict = {"exchanges": [], "fallback_used": False, "flags": []}
    try:
        policy = config.policy
        if policy == "gold_oracle":
            return item.gold_index, trace
        if policy == "uniform_random":
            rng = random.Random(derive_seed(config.seed, item.item_id))
            return rng.randrange(len(item.options)), trace
        if policy == "external_predictions":
            if item.item_id not in predictions:
                trace["flags"].append("missing_prediction")
                return None, trace
            index = predictions[item.item_id]
            if not 0 <= index < len(item.options):
                trace["flags"].append("prediction_out_of_range")
                return None, trace
            return index, trace

        if policy in ("argmax_symbolic", "argmax_neural", "argmax_hybrid"):
            precedents, _, fused = _score_item(item, memory, config)
            trace["precedents"] = [p.graph_id for p in precedents]
            trace["scores"] = fused.to_dict()
            return answer_argmax(fused), trace

        if policy == "provmind_llm":
            precedents, sym, fused = _score_item(item, memory, config)
            fallback = fuse_scores(sym, None, 1.0) if sym is not None else fused
            index, trace = llm_answer(item, memory, precedents, fused, fallback, client, config)
            trace["precedents"] = [p.graph_id for p in precedents]
            trace["scores"] = fused.to_dict()
            return index, trace

        if policy == "zero_shot":
            return _baseline_answer(item, "zero_shot", client, config)
        if policy == "few_shot":
            return _baseline_answer(
                item, "few_shot", client, config, exemplars=exemplars_by_task[item.task]
            )
        if policy == "rag":
            precedents = retrieve(
                query_from_item(item), memory, config.weights, config.rag_k
            )
            trace_index, trace = _baseline_answer(
                item, "rag", client, config, memory=memory, precedents=precedents
            )
            trace["precedents"] = [p.graph_id for p in precedents]
            return trace_index, trace
        if policy == "graphrag":
            structural = retrieve(
                query_from_item(item),
                memory,
                RetrievalWeights.for_views(["structure"]),
                config.graph_k,
            )
            graph_ids = [p.graph_id for p in structural]
            trace_index, trace = _baseline_answer(
                item, "graphrag", client, config, memory=memory, graph_ids=graph_ids
            )
            trace["precedents"] = graph_ids
            return trace_index, trace
        raise InvalidParams(f"unhandled policy {policy!r}")
    except MatprocError as exc:
        trace["flags"].append(f"item_error:{type(exc).__name__}")
        return None, trace


# --- evaluation -------------------------------------------------------------------------


def evaluate(
    items: list[BenchItem],
    memory: ProcessMemory | None = None,
    config: PolicyConfig = PolicyConfig(),
    client=None,
    train_items: list[BenchItem] | None = None,
    predictions: dict[str, int] | None = None,
    partition: str = "",
    jobs: int = 1,
) -> tuple[EvalReport, list[dict]]:
    """Answer every item once; return the report and the per-item log rows."""
    if config.policy in _NEEDS_MEMORY and memory is None:
        raise InvalidParams(f"policy {config.policy!r} needs a process memory")
    if config.policy == "few_shot" and not train_items:
        raise InvalidParams("few_shot policy needs train_items as the exemplar pool")
    if config.policy == "external_predictions" and predictions is None:
        raise InvalidParams("external_predictions policy needs a predictions mapping")
    if client is None and config.policy in _LLM_POLICIES:
        client = MockChatClient()

    exemplars_by_task: dict[str, list[BenchItem]] = {}
    if config.policy == "few_shot":
        eval_ids = {it.item_id for it in items}
        if partition in ("dev", "test"):
            overlap = eval_ids & {it.item_id for it in train_items}
            if overlap:
                raise InvalidParams(
                    f"exemplar pool overlaps the evaluated {partition} partition: "
                    f"{sorted(overlap)[:3]}"
                )
        for task in TASKS:
            exemplars_by_task[task] = _sample_exemplars(train_items, task, config)
        for exemplar_list in exemplars_by_task.values():
            leaked = [ex.item_id for ex in exemplar_list if ex.item_id in eval_ids]
            if leaked and partition in ("dev", "test"):
                raise InvalidParams(f"exemplars leak into {partition}: {leaked[:3]}")

    started = time.monotonic()

    def work(item):
        return _answer_item(item, memory, config, client, exemplars_by_task, predictions)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            answers = list(pool.map(work, items))
    else:
        answers = [work(item) for item in items]

    rows = []
    per_task: dict[str, dict] = {}
    for item, (index, trace) in zip(items, answers):
        correct = index is not None and index == item.gold_index
        row = {
            "item_id": item.item_id,
            "task": item.task,
            "policy": config.policy,
            "answer_index": index,
            "gold_index": item.gold_index,
            "correct": correct,
            "fallback_used": trace.get("fallback_used", False),
            "flags": trace.get("flags", []),
            "exchanges": trace.get("exchanges", []),
            "precedents": trace.get("precedents", []),
            "scores": trace.get("scores"),
        }
        rows.append(row)
        bucket = per_task.setdefault(item.task, {"correct": 0, "total": 0})
        bucket["total"] += 1
        bucket["correct"] += int(correct)

    for bucket in per_task.values():
        bucket["accuracy"] = bucket["correct"] / bucket["total"] if bucket["total"] else 0.0
    overall_correct = sum(b["correct"] for b in per_task.values())
    overall_total = sum(b["total"] for b in per_task.values())
    report = EvalReport(
        split_id=memory.split_id if memory is not None else "",
        policy=config.to_dict(),
        per_task={task: per_task[task] for task in sorted(per_task)},
        overall={
            "correct": overall_correct,
            "total": overall_total,
            "accuracy": overall_correct / overall_total if overall_total else 0.0,
        },
        wall_clock_s=time.monotonic() - started,
    )
    return report, rows


def score_external_predictions(
    items: list[BenchItem], predictions: dict[str, int]
) -> tuple[EvalReport, list[dict]]:
    """Score an externally produced item_id -> option index mapping."""
    known = {it.item_id for it in items}
    strangers = sorted(set(predictions) - known)
    if strangers:
        raise UnknownItemId(f"predictions reference unknown items: {strangers[:3]}")
    return evaluate(
        items,
        config=PolicyConfig(policy="external_predictions"),
        predictions=predictions,
    )


# --- ablation grid ----------------------------------------------------------------------


ABLATION_AXES = ("module", "scoring", "retrieval", "fusion", "top_k")

_VIEW_ROWS = (
    ("text_only", ["text"]),
    ("structure_only", ["structure"]),
    ("heuristic_only", ["heuristic"]),
    ("text+structure", ["text", "structure"]),
    ("text+heuristic", ["text", "heuristic"]),
    ("structure+heuristic", ["structure", "heuristic"]),
    ("full", ["text", "structure", "heuristic"]),
)
_FUSION_ROWS = (
    ("equal", (1 / 3, 1 / 3, 1 / 3)),
    ("text_heavy", (0.6, 0.2, 0.2)),
    ("structure_heavy", (0.2, 0.6, 0.2)),
    ("heuristic_heavy", (0.2, 0.2, 0.6)),
)
_LAMBDA_ROWS = (1.0, 0.0, 0.5, 0.7, 0.3)
_TOP_K_ROWS = (1, 2, 4, 8, 16)


def ablation_grid(base: PolicyConfig, axes=None) -> list[tuple[str, str, PolicyConfig]]:
    """The (block, label, config) lattice; full grid is 25 rows."""
    chosen = tuple(axes) if axes is not None else ABLATION_AXES
    unknown = set(chosen) - set(ABLATION_AXES)
    if unknown:
        raise InvalidGridAxis(f"unknown ablation axes: {sorted(unknown)}")
    rows: list[tuple[str, str, PolicyConfig]] = []
    if "module" in chosen:
        llm = replace(base, policy="provmind_llm")
        rows.append(("module", "full", llm))
        rows.append(("module", "planning_off", replace(llm, planning=False)))
        rows.append(("module", "fallback_off", replace(llm, fallback=False)))
        rows.append(("module", "symbolic_scoring_off", replace(llm, lam=0.0)))
    if "scoring" in chosen:
        for lam in _LAMBDA_ROWS:
            rows.append(
                ("scoring", f"lambda={lam:.1f}", replace(base, policy="argmax_hybrid", lam=lam))
            )
    if "retrieval" in chosen:
        for label, views in _VIEW_ROWS:
            rows.append(
                (
                    "retrieval",
                    label,
                    replace(
                        base,
                        policy="argmax_hybrid",
                        weights=RetrievalWeights.for_views(views),
                    ),
                )
            )
    if "fusion" in chosen:
        for label, (alpha, beta, gamma) in _FUSION_ROWS:
            rows.append(
                (
                    "fusion",
                    label,
                    replace(
                        base,
                        policy="argmax_hybrid",
                        weights=RetrievalWeights(alpha, beta, gamma),
                    ),
                )
            )
    if "top_k" in chosen:
        for k in _TOP_K_ROWS:
            rows.append(("top_k", f"k={k}", replace(base, policy="argmax_hybrid", top_k=k)))
    return rows


def run_ablation(
    items: list[BenchItem],
    memory: ProcessMemory,
    base: PolicyConfig = PolicyConfig(),
    client=None,
    axes=None,
    jobs: int = 1,
) -> list[dict]:
    """One EvalReport per lattice point."""
    results = []
    for block, label, config in ablation_grid(base, axes):
        report, _ = evaluate(items, memory, config, client=client, jobs=jobs)
        results.append({"block": block, "label": label, "report": report})
    return results


# --- rendering --------------------------------------------------------------------------


def render_report(report: EvalReport) -> str:
    width = max([len("overall")] + [len(t) for t in report.per_task])
    lines = [
        f"policy: {report.policy.get('policy', '?')}    split: {report.split_id or '-'}",
        f"{'task'.ljust(width)}  accuracy   correct/total",
    ]
    for task, bucket in report.per_task.items():
        lines.append(
            f"{task.ljust(width)}  {bucket['accuracy'] * 100:7.2f}%   "
            f"{bucket['correct']}/{bucket['total']}"
        )
    overall = report.overall
    lines.append(
        f"{'overall'.ljust(width)}  {overall['accuracy'] * 100:7.2f}%   "
        f"{overall['correct']}/{overall['total']}"
    )
    if report.wall_clock_s:
        lines.append(f"wall clock: {report.wall_clock_s:.2f}s")
    return "\n".join(lines)


def render_ablation_table(rows: list[dict]) -> str:
    label_width = max(len(r["label"]) for r in rows)
    block_width = max(len(r["block"]) for r in rows)
    lines = [f"{'block'.ljust(block_width)}  {'variant'.ljust(label_width)}  accuracy   correct/total"]
    for row in rows:
        overall = row["report"].overall
        lines.append(
            f"{row['block'].ljust(block_width)}  {row['label'].ljust(label_width)}  "
            f"{overall['accuracy'] * 100:7.2f}%   {overall['correct']}/{overall['total']}"
        )
    return "\n".join(lines)
