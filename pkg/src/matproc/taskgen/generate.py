"""Instantiate the seven multiple-choice tasks from a compiled graph.

Gold answers are recoverable by rule from the source graph alone — the
generator's RNG only chooses which positions get items, which distractors
fill the remaining slots, and where the gold lands. Item seeds derive from
(global seed, graph id, task, ordinal), so generation is schedule
independent and a benchmark regenerates byte-identically.
"""

from __future__ import annotations

import itertools
import random
from collections import Counter
from dataclasses import dataclass

from ..canon import derive_seed
from ..errors import PoolExhausted, RetentionFilterFailed
from ..provgraph import (
    ProcessGraph,
    final_product_label,
    precursor_labels,
    route_labels,
    step_material_inputs,
    step_material_outputs,
    step_tool_labels,
)
from .model import MASK_TOKEN, TUPLE_KEYS, BenchItem, render_condition_tuple, render_route
from .pools import DistractorPools, build_candidate_pools, weighted_distinct_sample

DEFAULT_K = 4


@dataclass
class GenCaps:
    """Per-graph emission caps; tuned so the task mix stays B1-heavy."""

    a1: int = 1
    a2: int = 3
    a3: int = 3
    b1: int = 4
    b2: int = 2
    c1: int = 3
    d: int = 1

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("a1", "a2", "a3", "b1", "b2", "c1", "d")}

    @classmethod
    def from_dict(cls, d: dict) -> "GenCaps":
        return cls(**{k: int(v) for k, v in d.items()})


def payload_constraints(steps: list[dict]) -> set[tuple[str, str]]:
    """Ordering constraints recomputable from a D question payload.

    Step i must precede step j when an output of i is an input of j. Label
    level on purpose: the payload never exposes node ids.
    """
    pairs = set()
    for a in steps:
        outs = set(a["outputs"])
        for b in steps:
            if a["label"] != b["label"] and outs & set(b["inputs"]):
                pairs.add((a["label"], b["label"]))
    return pairs


def order_satisfies(order: list[str], constraints: set[tuple[str, str]]) -> bool:
    pos = {label: i for i, label in enumerate(order)}
    return all(pos[i] < pos[j] for (i, j) in constraints if i in pos and j in pos)


def _place_gold(rng: random.Random, gold: str, distractors: list[str]) -> tuple[list[str], int]:
    gold_index = rng.randrange(len(distractors) + 1)
    options = list(distractors)
    options.insert(gold_index, gold)
    return options, gold_index


def _select_positions(rng: random.Random, candidates: list, cap: int) -> list:
    if len(candidates) <= cap:
        return list(candidates)
    return sorted(rng.sample(candidates, cap), key=candidates.index)


def _conditioned_or_global(sub: Counter, global_pool: Counter, gold: str, need: int) -> Counter:
    """The activity-conditioned sub-pool when it can fill the quota, else global."""
    usable = [k for k in sub if k != gold]
    return sub if len(usable) >= need else global_pool


def instantiate_tasks(
    g: ProcessGraph,
    pools: DistractorPools,
    k_options: int = DEFAULT_K,
    seed: int = 0,
    caps: GenCaps | None = None,
    skip_log: list | None = None,
) -> list[BenchItem]:
    caps = caps or GenCaps()
    route = route_labels(g)
    acts = g.ordered_activities()
    if not acts or not any(e.role == "precursor" for e in g.material_entities):
        raise RetentionFilterFailed(f"{g.record_id}: needs >=1 activity and >=1 precursor")

    gid = g.record_id
    need = k_options - 1
    product = final_product_label(g)
    precursors = precursor_labels(g)
    items: list[BenchItem] = []

    def log_skip(task: str, reason: str) -> None:
        if skip_log is not None:
            skip_log.append({"graph_id": gid, "task": task, "reason": reason})

    def item_rng(task: str, ordinal: int) -> random.Random:
        return random.Random(derive_seed(seed, gid, task, ordinal))

    def select_rng(task: str) -> random.Random:
        return random.Random(derive_seed(seed, gid, task, "select"))

    def emit(task: str, ordinal: int, question: dict, gold: str, distractors: list[str]) -> None:
        place_rng = random.Random(derive_seed(seed, gid, task, ordinal, "gold"))
        options, gold_index = _place_gold(place_rng, gold, distractors)
        items.append(
            BenchItem(
                item_id=f"{gid}:{task}:{ordinal}",
                task=task,
                question=question,
                options=options,
                gold_index=gold_index,
                graph_id=gid,
                doi=g.doi,
                year=g.year,
                material_class=g.material_class,
            )
        )

    def sample_labels(task: str, ordinal: int, pool: Counter, gold: str, exclude=()) -> list[str] | None:
        try:
            return weighted_distinct_sample(
                item_rng(task, ordinal), pool, need, exclude=set(exclude) | {gold}
            )
        except PoolExhausted:
            log_skip(task, "pool_exhausted")
            return None

    # A1: recover the full route for a product given its precursors
    task = "A1_route_retrieval"
    if caps.a1 >= 1:
        gold = render_route(route)
        rendered = Counter()
        for r, count in pools.routes.items():
            text = render_route(r)
            if text != gold:
                rendered[text] += count / (1 + abs(len(r) - len(route)))
        distractors = sample_labels(task, 0, rendered, gold)
        if distractors is not None:
            emit(task, 0, {"product": product, "precursors": precursors}, gold, distractors)

    # A2: identify one masked activity from its neighbours
    task = "A2_missing_step"
    for ordinal, pos in enumerate(_select_positions(select_rng(task), list(range(len(route))), caps.a2)):
        gold = route[pos]
        neighbour_pool: Counter = Counter()
        if pos > 0:
            neighbour_pool.update(pools.successors.get(route[pos - 1], Counter()))
        if pos < len(route) - 1:
            neighbour_pool.update(pools.predecessors.get(route[pos + 1], Counter()))
        pool = _conditioned_or_global(neighbour_pool, pools.activity_labels, gold, need)
        distractors = sample_labels(task, ordinal, pool, gold)
        if distractors is None:
            continue
        masked = list(route)
        masked[pos] = MASK_TOKEN
        question = {
            "product": product,
            "precursors": precursors,
            "route_with_mask": masked,
            "masked_index": pos,
        }
        emit(task, ordinal, question, gold, distractors)

    # A3: continue a route prefix with the next activity
    task = "A3_next_activity"
    prefix_lengths = list(range(1, len(route)))
    for ordinal, plen in enumerate(_select_positions(select_rng(task), prefix_lengths, caps.a3)):
        gold = route[plen]
        pool = _conditioned_or_global(
            pools.successors.get(route[plen - 1], Counter()), pools.activity_labels, gold, need
        )
        distractors = sample_labels(task, ordinal, pool, gold)
        if distractors is None:
            continue
        question = {"product": product, "precursors": precursors, "prefix": route[:plen]}
        emit(task, ordinal, question, gold, distractors)

    def step_question(index: int) -> dict:
        labels, forms = step_material_inputs(g, acts[index].id)
        return {
            "route": route,
            "step_index": index,
            "activity": route[index],
            "step_inputs": labels,
            "step_input_forms": forms,
        }

    # B1: predict one condition value on a target step
    task = "B1_condition_prediction"
    slots = [(i, key) for i, act in enumerate(acts) for key in sorted(act.conditions)]
    for ordinal, (i, key) in enumerate(_select_positions(select_rng(task), slots, caps.b1)):
        gold = acts[i].conditions[key]
        pool = _conditioned_or_global(
            pools.values_by_activity.get((route[i], key), Counter()),
            pools.condition_values.get(key, Counter()),
            gold,
            need,
        )
        distractors = sample_labels(task, ordinal, pool, gold)
        if distractors is None:
            continue
        question = step_question(i)
        question["condition_key"] = key
        emit(task, ordinal, question, gold, distractors)

    # B2: predict the step's complete condition tuple
    task = "B2_full_condition_set"
    complete = [i for i, act in enumerate(acts) if all(k in act.conditions for k in TUPLE_KEYS)]
    for ordinal, i in enumerate(_select_positions(select_rng(task), complete, caps.b2)):
        gold = render_condition_tuple(acts[i].conditions)
        rendered = Counter()
        for values, count in pools.condition_tuples.items():
            text = render_condition_tuple(dict(zip(TUPLE_KEYS, values)))
            if text != gold:
                rendered[text] += count
        distractors = sample_labels(task, ordinal, rendered, gold)
        if distractors is None:
            continue
        emit(task, ordinal, step_question(i), gold, distractors)

    # C1: pick the tool the target step used
    task = "C1_tool_selection"
    with_tools = [i for i, act in enumerate(acts) if step_tool_labels(g, act.id)]
    for ordinal, i in enumerate(_select_positions(select_rng(task), with_tools, caps.c1)):
        step_tools = step_tool_labels(g, acts[i].id)
        gold = step_tools[0]
        distractors = sample_labels(task, ordinal, pools.tool_labels, gold, exclude=step_tools)
        if distractors is None:
            continue
        emit(task, ordinal, step_question(i), gold, distractors)

    # D: order the shuffled steps into the causally valid sequence
    task = "D_process_ordering"
    if caps.d >= 1 and len(route) >= 2 and len(set(route)) == len(route):
        rng = item_rng(task, 0)
        steps = []
        for act, label in zip(acts, route):
            in_labels, _ = step_material_inputs(g, act.id)
            out_labels, _ = step_material_outputs(g, act.id)
            steps.append({"label": label, "inputs": in_labels, "outputs": out_labels})
        shuffled = list(steps)
        rng.shuffle(shuffled)
        constraints = payload_constraints(shuffled)
        gold = render_route(route)
        if not order_satisfies(route, constraints):
            log_skip(task, "ambiguous_material_flow")
        else:
            violating = _violating_permutations(rng, route, constraints, need)
            if violating is None:
                log_skip(task, "pool_exhausted")
            else:
                question = {"product": product, "precursors": precursors, "steps": shuffled}
                emit(task, 0, question, gold, [render_route(p) for p in violating])

    return items


def _violating_permutations(
    rng: random.Random, route: list[str], constraints, need: int
) -> list[tuple[str, ...]] | None:
    """need distinct label permutations, each violating >=1 constraint.

    Routes are short (<=7 here), so exhaustive enumeration stays cheap;
    longer routes fall back to seeded rejection sampling.
    """
    if len(route) <= 7:
        bad = [
            p
            for p in itertools.permutations(route)
            if not order_satisfies(list(p), constraints)
        ]
        if len(bad) < need:
            return None
        return sorted(rng.sample(bad, need))
    found: set[tuple[str, ...]] = set()
    for _ in range(200 * need):
        perm = list(route)
        rng.shuffle(perm)
        t = tuple(perm)
        if not order_satisfies(perm, constraints):
            found.add(t)
        if len(found) == need:
            return sorted(found)
    return None


def generate_benchmark(
    corpus: list[ProcessGraph],
    k_options: int = DEFAULT_K,
    seed: int = 0,
    caps: GenCaps | None = None,
) -> tuple[list[BenchItem], list[dict]]:
    """Pools over the whole corpus, then per-graph instantiation."""
    pools = build_candidate_pools(corpus)
    items: list[BenchItem] = []
    skip_log: list[dict] = []
    for g in corpus:
        try:
            items.extend(
                instantiate_tasks(g, pools, k_options=k_options, seed=seed, caps=caps, skip_log=skip_log)
            )
        except RetentionFilterFailed:
            skip_log.append({"graph_id": g.record_id, "task": "*", "reason": "retention_filter"})
    return items, skip_log
