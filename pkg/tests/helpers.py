"""Tiny graph builders shared across test modules."""

from __future__ import annotations

import random

from matproc.provgraph import ActivityNode, EntityNode, ProcessGraph, compile_graph


def chain_graph(labels, record_id="g0", doi="10.1/x", year=2018, material_class="thermoelectric",
                conditions=None, tools=None, precursors=("lithium carbonate",)):
    """precursors -> a0 -> m1 -> a1 -> ... -> product, one usage/generation per hop."""
    g = ProcessGraph(record_id=record_id, doi=doi, year=year, material_class=material_class)
    for i, name in enumerate(precursors):
        g.material_entities.append(
            EntityNode(id=f"p{i}", label=name, kind="material", attributes={"form": "powder"})
        )
    prev = [e.id for e in g.material_entities]
    for i, label in enumerate(labels):
        act = ActivityNode(id=f"a{i}", label=label, source_position=i,
                           conditions=dict((conditions or {}).get(label, {})))
        g.activities.append(act)
        for src in prev:
            g.usage_edges.append((src, act.id))
        out = EntityNode(id=f"m{i}", label=f"stage {i}", kind="material", attributes={"form": "powder"})
        g.material_entities.append(out)
        g.generation_edges.append((act.id, out.id))
        prev = [out.id]
        for tool_label in (tools or {}).get(label, ()):  # one tool entity per (label, activity)
            tid = f"t{i}_{tool_label}"
            g.tool_entities.append(
                EntityNode(id=tid, label=tool_label, kind="tool", attributes={"category": "tool"})
            )
            g.usage_edges.append((tid, act.id))
    return g


def random_graph(seed, n_materials=12, n_tools=3, n_activities=5, p_edge=0.35):
    """Random bipartite-ish graph; may be cyclic, used for role oracles only."""
    rng = random.Random(seed)
    g = ProcessGraph(record_id=f"rand-{seed}", doi=f"10.9/{seed}", year=2015)
    for i in range(n_materials):
        g.material_entities.append(EntityNode(id=f"m{i}", label=f"mat {i}", kind="material"))
    for i in range(n_tools):
        g.tool_entities.append(EntityNode(id=f"t{i}", label=f"tool {i}", kind="tool"))
    for i in range(n_activities):
        g.activities.append(ActivityNode(id=f"a{i}", label=f"op {i}", source_position=i))
    for e in g.material_entities + g.tool_entities:
        for a in g.activities:
            if rng.random() < p_edge:
                g.usage_edges.append((e.id, a.id))
    for a in g.activities:
        for e in g.material_entities:
            if rng.random() < p_edge / 2:
                g.generation_edges.append((a.id, e.id))
    return g


def compiled(g):
    return compile_graph(g)
