"""Round-trip validity check: the gold answer must be recomputable from
the source graph, and ordering distractors must visibly violate the flow."""

from __future__ import annotations

from ..provgraph import ProcessGraph, route_labels, step_tool_labels
from .generate import order_satisfies, payload_constraints
from .model import TUPLE_KEYS, BenchItem, ValidityReport, render_condition_tuple, render_route


def expected_gold(item: BenchItem, g: ProcessGraph) -> str | None:
    """Recompute the gold option string by rule; None for unknown tasks."""
    route = route_labels(g)
    acts = g.ordered_activities()
    q = item.question
    if item.task == "A1_route_retrieval":
        return render_route(route)
    if item.task == "A2_missing_step":
        return route[q["masked_index"]]
    if item.task == "A3_next_activity":
        return route[len(q["prefix"])]
    if item.task == "B1_condition_prediction":
        return acts[q["step_index"]].conditions.get(q["condition_key"])
    if item.task == "B2_full_condition_set":
        conditions = acts[q["step_index"]].conditions
        if not all(k in conditions for k in TUPLE_KEYS):
            return None
        return render_condition_tuple(conditions)
    if item.task == "C1_tool_selection":
        tools = step_tool_labels(g, acts[q["step_index"]].id)
        return tools[0] if tools else None
    if item.task == "D_process_ordering":
        return render_route(route)
    return None


def validate_item(item: BenchItem, g: ProcessGraph) -> ValidityReport:
    report = ValidityReport(item_id=item.item_id)
    if item.graph_id != g.record_id:
        report.flag("WrongGraph", f"item cites {item.graph_id}, graph is {g.record_id}")
        return report
    if not 0 <= item.gold_index < len(item.options):
        report.flag("GoldMismatch", f"gold_index {item.gold_index} out of range")
        return report
    if len(set(item.options)) != len(item.options):
        report.flag("DuplicateOptions", "options are not pairwise distinct")

    expected = expected_gold(item, g)
    if expected is None:
        report.flag("GoldMismatch", f"no gold derivable for task {item.task}")
    elif expected != item.gold_option():
        report.flag("GoldMismatch", f"expected {expected!r}, stored {item.gold_option()!r}")

    if item.task == "D_process_ordering":
        constraints = payload_constraints(item.question["steps"])
        for idx, option in enumerate(item.options):
            if idx == item.gold_index:
                continue
            if order_satisfies(option.split(" -> "), constraints):
                report.flag("DistractorViolationMissing", f"option {idx} is a valid ordering")
    return report
