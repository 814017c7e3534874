"""Corpus-derived candidate pools for distractor sampling.

Every pool keeps occurrence counts so sampling can be frequency-weighted,
and every element is something actually observed in the corpus — no
distractor is ever synthesized de novo.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from ..errors import EmptyCorpus, PoolExhausted
from ..provgraph import (
    ProcessGraph,
    route_labels,
    step_material_inputs,
    step_material_outputs,
    step_tool_labels,
)
from .model import TUPLE_KEYS


@dataclass
class DistractorPools:
    routes: Counter = field(default_factory=Counter)  # tuple[str, ...] -> count
    activity_labels: Counter = field(default_factory=Counter)
    tool_labels: Counter = field(default_factory=Counter)
    material_forms: Counter = field(default_factory=Counter)
    condition_values: dict[str, Counter] = field(default_factory=dict)
    condition_tuples: Counter = field(default_factory=Counter)  # tuple of TUPLE_KEYS values
    # activity-conditioned sub-pools
    successors: dict[str, Counter] = field(default_factory=dict)
    predecessors: dict[str, Counter] = field(default_factory=dict)
    tools_by_activity: dict[str, Counter] = field(default_factory=dict)
    values_by_activity: dict[tuple[str, str], Counter] = field(default_factory=dict)
    # form-transition sub-pool: (input form, output form) -> activity labels
    activities_by_form_transition: dict[tuple[str, str], Counter] = field(default_factory=dict)


def build_candidate_pools(corpus: list[ProcessGraph]) -> DistractorPools:
    """Single pass over compiled graphs; counts retained for weighting."""
    if not corpus:
        raise EmptyCorpus("candidate pools need at least one graph")
    pools = DistractorPools()
    for g in corpus:
        route = route_labels(g)
        pools.routes[tuple(route)] += 1
        for left, right in zip(route, route[1:]):
            pools.successors.setdefault(left, Counter())[right] += 1
            pools.predecessors.setdefault(right, Counter())[left] += 1
        for act, label in zip(g.ordered_activities(), route):
            pools.activity_labels[label] += 1
            for tool in step_tool_labels(g, act.id):
                pools.tool_labels[tool] += 1
                pools.tools_by_activity.setdefault(label, Counter())[tool] += 1
            for key, value in act.conditions.items():
                pools.condition_values.setdefault(key, Counter())[value] += 1
                pools.values_by_activity.setdefault((label, key), Counter())[value] += 1
            if all(k in act.conditions for k in TUPLE_KEYS):
                pools.condition_tuples[tuple(act.conditions[k] for k in TUPLE_KEYS)] += 1
            _, in_forms = step_material_inputs(g, act.id)
            _, out_forms = step_material_outputs(g, act.id)
            for form in in_forms + out_forms:
                pools.material_forms[form] += 1
            for fin in set(in_forms):
                for fout in set(out_forms):
                    pools.activities_by_form_transition.setdefault((fin, fout), Counter())[label] += 1
    return pools


def weighted_distinct_sample(rng, pool: Counter, n: int, exclude=()) -> list:
    """n distinct pool elements, frequency-weighted, excluding `exclude`.

    Seeded draws first; if the weighted draws keep colliding, the tail is
    filled deterministically by descending count so the call always
    terminates. Raises PoolExhausted when fewer than n candidates exist.
    """
    excluded = set(exclude)
    candidates = sorted(k for k in pool if k not in excluded)
    if len(candidates) < n:
        raise PoolExhausted(f"pool holds {len(candidates)} candidates, {n} needed")
    weights = [pool[k] for k in candidates]
    chosen: list = []
    seen = set()
    attempts = 0
    while len(chosen) < n and attempts < 50 * n:
        pick = rng.choices(candidates, weights=weights, k=1)[0]
        attempts += 1
        if pick not in seen:
            seen.add(pick)
            chosen.append(pick)
    if len(chosen) < n:
        for k in sorted(candidates, key=lambda c: (-pool[c], c)):
            if k not in seen:
                seen.add(k)
                chosen.append(k)
            if len(chosen) == n:
                break
    return chosen
