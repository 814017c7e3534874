"""Multiple-choice benchmark generation from compiled process graphs."""

from .model import (
    MASK_TOKEN,
    TASKS,
    TUPLE_KEYS,
    BenchItem,
    ValidityReport,
    render_condition_tuple,
    render_route,
)
from .pools import DistractorPools, build_candidate_pools, weighted_distinct_sample
from .generate import (
    DEFAULT_K,
    GenCaps,
    generate_benchmark,
    instantiate_tasks,
    order_satisfies,
    payload_constraints,
)
from .validate import expected_gold, validate_item
from .store import BENCH_FORMAT, load_items, read_benchmark, write_benchmark

__all__ = [
    "BENCH_FORMAT",
    "BenchItem",
    "DEFAULT_K",
    "DistractorPools",
    "GenCaps",
    "MASK_TOKEN",
    "TASKS",
    "TUPLE_KEYS",
    "ValidityReport",
    "build_candidate_pools",
    "expected_gold",
    "generate_benchmark",
    "instantiate_tasks",
    "load_items",
    "order_satisfies",
    "payload_constraints",
    "read_benchmark",
    "render_condition_tuple",
    "render_route",
    "validate_item",
    "weighted_distinct_sample",
    "write_benchmark",
]
