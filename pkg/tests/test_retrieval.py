"""Retrieval: embedders, the frozen structure encoder, heuristic and fusion."""

from __future__ import annotations

import hashlib

import numpy as np
import pytest
import requests

from matproc import retrieval as rt
from matproc.canon import canon_label, derive_seed
from matproc.errors import EmbedderUnavailable, EmptyMemory, InvalidParams
from matproc.memory import (
    ProcessSummary,
    build_memory,
    linearize_process,
    load_memory,
    save_memory,
)
from matproc.provgraph import (
    EntityNode,
    ProcessGraph,
    SynthParams,
    generate_synthetic_corpus,
    validate_graph,
)
from matproc.taskgen import generate_benchmark

from helpers import chain_graph, compiled


def small_corpus(n=20, seed=7):
    return [compiled(g) for g in generate_synthetic_corpus(SynthParams(n_records=n), seed=seed)]


def one_hot(bucket: int) -> list[float]:
    vec = np.zeros(rt.EMBED_DIM)
    vec[bucket] = 1.0
    return [float(x) for x in vec]


# --- built-in text embedder ---------------------------------------------------------


def test_builtin_embedder_unit_norm_sweep():
    corpus = small_corpus()
    memory = build_memory(corpus)
    texts = [linearize_process(memory, g.record_id) for g in corpus]
    texts += ["lithium carbonate", "ball milling at 300 rpm", "x" * 400]
    vectors = rt.BuiltinTextEmbedder().embed(texts)
    norms = np.linalg.norm(vectors, axis=1)
    assert np.all(np.abs(norms - 1.0) <= 1e-9)


def test_builtin_embedder_deterministic():
    texts = ["precursors: a, b | route: mill -> sinter", "route: anneal"]
    first = rt.BuiltinTextEmbedder().embed(texts)
    second = rt.BuiltinTextEmbedder().embed(texts)
    assert np.array_equal(first, second)


def test_builtin_embedder_identical_texts_cosine_one():
    vecs = rt.BuiltinTextEmbedder().embed(["sinter at 900 c", "sinter at 900 c"])
    assert rt.cosine(vecs[0], vecs[1]) == pytest.approx(1.0, abs=1e-12)


def test_builtin_embedder_short_text_is_zero_vector():
    # nothing reaches the smallest n-gram size, and the zero vector must survive
    vecs = rt.BuiltinTextEmbedder().embed(["ab", ""])
    assert np.all(vecs == 0.0)
    assert rt.cosine(vecs[0], vecs[1]) == 0.0


def test_builtin_embedder_single_trigram_bucket():
    # "abc" carries exactly one n-gram, so the embedding is a one-hot at the
    # bucket the documented hashing contract assigns to it
    vec = rt.BuiltinTextEmbedder().embed(["abc"])[0]
    bucket = int.from_bytes(hashlib.blake2b(b"abc", digest_size=4).digest(), "big") % rt.EMBED_DIM
    nonzero = np.nonzero(vec)[0]
    assert list(nonzero) == [bucket]
    assert vec[bucket] == pytest.approx(1.0)


def test_builtin_embedder_distinguishes_texts():
    vecs = rt.BuiltinTextEmbedder().embed(["mill then sinter", "sinter then mill"])
    assert rt.cosine(vecs[0], vecs[1]) < 1.0 - 1e-6


# --- endpoint text embedder ---------------------------------------------------------


class _FakeResponse:
    def __init__(self, payload, fail=False):
        self._payload = payload
        self._fail = fail

    def raise_for_status(self):
        if self._fail:
            raise requests.HTTPError("boom")

    def json(self):
        return self._payload


def test_endpoint_embedder_normalizes_and_posts(monkeypatch):
    seen = {}

    def fake_post(url, json=None, headers=None, timeout=None):
        seen.update(url=url, json=json, headers=headers)
        return _FakeResponse({"vectors": [[3.0, 4.0], [0.0, 2.0]]})

    monkeypatch.setattr(rt.requests, "post", fake_post)
    embedder = rt.EndpointTextEmbedder("http://embed.local/v1", token="tok")
    out = embedder.embed(["a", "b"])
    assert seen["url"] == "http://embed.local/v1"
    assert seen["json"] == {"texts": ["a", "b"]}
    assert seen["headers"] == {"Authorization": "Bearer tok"}
    assert np.allclose(out, [[0.6, 0.8], [0.0, 1.0]])


def test_endpoint_embedder_connection_error(monkeypatch):
    def fake_post(*args, **kwargs):
        raise requests.ConnectionError("no route to host")

    monkeypatch.setattr(rt.requests, "post", fake_post)
    with pytest.raises(EmbedderUnavailable):
        rt.EndpointTextEmbedder("http://embed.local/v1").embed(["a"])


def test_endpoint_embedder_bad_payload(monkeypatch):
    monkeypatch.setattr(
        rt.requests, "post", lambda *a, **k: _FakeResponse({"wrong_key": []})
    )
    with pytest.raises(EmbedderUnavailable):
        rt.EndpointTextEmbedder("http://embed.local/v1").embed(["a"])


def test_endpoint_embedder_wrong_row_count(monkeypatch):
    monkeypatch.setattr(
        rt.requests, "post", lambda *a, **k: _FakeResponse({"vectors": [[1.0, 0.0]]})
    )
    with pytest.raises(EmbedderUnavailable):
        rt.EndpointTextEmbedder("http://embed.local/v1").embed(["a", "b"])


def test_get_text_embedder_env_selection(monkeypatch):
    monkeypatch.delenv(rt.EMBED_URL_VAR, raising=False)
    assert isinstance(rt.get_text_embedder(), rt.BuiltinTextEmbedder)
    monkeypatch.setenv(rt.EMBED_URL_VAR, "http://embed.local/v1")
    monkeypatch.setenv(rt.EMBED_TOKEN_VAR, "sekrit")
    embedder = rt.get_text_embedder()
    assert isinstance(embedder, rt.EndpointTextEmbedder)
    assert embedder.url == "http://embed.local/v1"
    assert embedder.token == "sekrit"


# --- structure embedding -------------------------------------------------------------


def test_embed_structure_single_node_matches_plain_projection():
    # with one node the neighbourhood is the node itself, so attention must
    # collapse and the result is just two projected/squashed rounds, normalized
    g = ProcessGraph(record_id="solo")
    g.material_entities.append(EntityNode(id="m0", label="lithium", kind="material"))
    got = rt.embed_structure(g, seed=13)

    h = rt.BuiltinTextEmbedder().embed([canon_label("lithium")])[0]
    for round_index in range(2):
        rng = np.random.default_rng(derive_seed(13, "round", round_index))
        w = rng.normal(0.0, 1.0 / np.sqrt(rt.EMBED_DIM), size=(rt.EMBED_DIM, rt.EMBED_DIM))
        h = np.tanh(w @ h)
    h = h / np.linalg.norm(h)
    assert np.allclose(got, h, atol=1e-12)


def _relabelled_copy(g: ProcessGraph) -> ProcessGraph:
    """Same labelled structure under fresh node ids and permuted list orders."""
    rename = {n.id: f"z_{n.id}" for n in [*g.entities(), *g.activities]}
    out = ProcessGraph(record_id="iso-copy")
    out.material_entities = [
        EntityNode(id=rename[e.id], label=e.label, kind=e.kind, attributes=dict(e.attributes))
        for e in reversed(g.material_entities)
    ]
    out.tool_entities = [
        EntityNode(id=rename[e.id], label=e.label, kind=e.kind, attributes=dict(e.attributes))
        for e in reversed(g.tool_entities)
    ]
    out.activities = [type(a)(id=rename[a.id], label=a.label, conditions=dict(a.conditions),
                              source_position=a.source_position)
                      for a in reversed(g.activities)]
    out.usage_edges = [(rename[s], rename[d]) for (s, d) in reversed(g.usage_edges)]
    out.generation_edges = [(rename[s], rename[d]) for (s, d) in reversed(g.generation_edges)]
    return out


def test_embed_structure_isomorphism_invariant():
    g = chain_graph(
        ["ball milling", "sintering", "annealing"],
        tools={"sintering": ("tube furnace",)},
        precursors=("lithium carbonate", "cobalt oxide"),
    )
    twin = _relabelled_copy(g)
    assert np.allclose(rt.embed_structure(g), rt.embed_structure(twin), atol=1e-9)


def test_embed_structure_deterministic_and_unit_norm():
    for g in small_corpus(n=6):
        first = rt.embed_structure(g)
        second = rt.embed_structure(g)
        assert np.array_equal(first, second)
        assert np.linalg.norm(first) == pytest.approx(1.0, abs=1e-9)


def test_embed_structure_seed_changes_vector():
    g = chain_graph(["ball milling", "sintering"])
    assert not np.allclose(rt.embed_structure(g, seed=13), rt.embed_structure(g, seed=14))


def test_embed_structure_empty_graph_is_zero():
    assert np.all(rt.embed_structure(ProcessGraph(record_id="void")) == 0.0)


def test_embed_structure_structure_sensitive():
    # same node labels, different wiring -> different embedding
    a = chain_graph(["mixing", "sintering"], precursors=("x", "y"))
    b = chain_graph(["sintering", "mixing"], precursors=("x", "y"))
    assert not np.allclose(rt.embed_structure(a), rt.embed_structure(b))


# --- heuristic view ---------------------------------------------------------------


def summary(route, precursors, gid="q"):
    return ProcessSummary(graph_id=gid, route=list(route), precursors=list(precursors),
                          products=[], tools=[])


def test_heuristic_self_similarity():
    s = summary(["mill", "sinter"], ["lithium carbonate"])
    assert rt.score_heuristic(s, s) == 1.0


def test_heuristic_hand_value_partial_overlap():
    q = summary(["mill", "sinter"], ["a"])
    p = summary(["mill", "anneal"], ["b"])
    assert rt.score_heuristic(q, p) == pytest.approx((1 / 3 + 1.0 + 0.0) / 3)


def test_heuristic_hand_value_disjoint_lengths():
    q = summary(["x"], ["a"])
    p = summary(["p1", "p2", "p3", "p4"], ["b"])
    assert rt.score_heuristic(q, p) == pytest.approx((0.0 + 0.25 + 0.0) / 3)


def test_heuristic_empty_routes_count_as_agreement():
    assert rt.score_heuristic(summary([], []), summary([], [])) == 1.0


def test_heuristic_range_sweep():
    corpus = small_corpus()
    memory = build_memory(corpus)
    for q in memory.processes:
        for p in memory.processes:
            value = rt.score_heuristic(q, p)
            assert 0.0 <= value <= 1.0
            assert value == pytest.approx(rt.score_heuristic(p, q))  # symmetric


# --- weights -----------------------------------------------------------------------


def test_default_weights_and_top_k():
    w = rt.RetrievalWeights()
    assert (w.alpha, w.beta, w.gamma) == (0.4, 0.3, 0.3)
    assert rt.DEFAULT_TOP_K == 8


def test_weights_must_sum_to_one():
    with pytest.raises(InvalidParams):
        rt.RetrievalWeights(alpha=0.5, beta=0.5, gamma=0.5)


def test_weights_must_be_non_negative():
    with pytest.raises(InvalidParams):
        rt.RetrievalWeights(alpha=1.2, beta=-0.2, gamma=0.0)


def test_weights_for_view_subsets():
    assert rt.RetrievalWeights.for_views(["text"]) == rt.RetrievalWeights(1.0, 0.0, 0.0)
    pair = rt.RetrievalWeights.for_views(["text", "structure"])
    assert pair.alpha == pytest.approx(4 / 7)
    assert pair.beta == pytest.approx(3 / 7)
    assert pair.gamma == 0.0
    assert rt.RetrievalWeights.for_views(["text", "structure", "heuristic"]) == rt.RetrievalWeights()
    with pytest.raises(InvalidParams):
        rt.RetrievalWeights.for_views(["text", "vibes"])
    with pytest.raises(InvalidParams):
        rt.RetrievalWeights.for_views([])


# --- fusion ------------------------------------------------------------------------


def three_process_memory():
    graphs = [
        compiled(chain_graph(["mill"], record_id="pa", precursors=("x",))),
        compiled(chain_graph(["mill", "anneal"], record_id="pb", precursors=("x",))),
        compiled(chain_graph(["sinter"], record_id="pc", precursors=("y",))),
    ]
    memory = build_memory(graphs)
    # orthogonal hand-chosen view vectors make every cosine either 0 or 1
    memory.embedding_store = {
        "pa": {"text": one_hot(0), "struct": one_hot(3)},
        "pb": {"text": one_hot(1), "struct": one_hot(4)},
        "pc": {"text": one_hot(2), "struct": one_hot(5)},
    }
    query = rt.RetrievalQuery(
        summary=summary(["mill"], ["x"]),
        text_vec=np.asarray(one_hot(1)),
        struct_vec=np.asarray(one_hot(5)),
    )
    return memory, query


def test_retrieve_hand_computed_fusion():
    memory, query = three_process_memory()
    results = rt.retrieve(query, memory, k=3)
    assert [r.graph_id for r in results] == ["pb", "pa", "pc"]
    by_id = {r.graph_id: r for r in results}
    assert by_id["pa"].s_ret == pytest.approx(0.65, abs=1e-9)
    assert by_id["pb"].s_ret == pytest.approx(0.75, abs=1e-9)
    assert by_id["pc"].s_ret == pytest.approx(0.60, abs=1e-9)
    assert by_id["pb"].s_text == pytest.approx(1.0)
    assert by_id["pb"].s_struct == pytest.approx(0.5)
    assert by_id["pb"].s_heur == pytest.approx(2 / 3)


def test_retrieve_degenerate_weights_match_single_views():
    memory, query = three_process_memory()
    full = {r.graph_id: r for r in rt.retrieve(query, memory, k=3)}

    for weights, view in [
        (rt.RetrievalWeights(1.0, 0.0, 0.0), "s_text"),
        (rt.RetrievalWeights(0.0, 1.0, 0.0), "s_struct"),
        (rt.RetrievalWeights(0.0, 0.0, 1.0), "s_heur"),
    ]:
        got = [r.graph_id for r in rt.retrieve(query, memory, weights=weights, k=3)]
        want = sorted(full, key=lambda gid: (-getattr(full[gid], view), gid))
        assert got == want, view


def test_retrieve_fusion_invariant_and_ranges():
    corpus = small_corpus()
    memory = rt.attach_embeddings(build_memory(corpus), corpus)
    anchor = corpus[0]
    query = rt.RetrievalQuery(
        summary=memory.by_graph_id()[anchor.record_id],
        text=linearize_process(memory, anchor.record_id),
        context_graph=anchor,
    )
    weights = rt.RetrievalWeights()
    results = rt.retrieve(query, memory, weights=weights, k=len(corpus))
    assert len(results) == len(corpus)
    for r in results:
        for value in (r.s_text, r.s_struct, r.s_heur, r.s_ret):
            assert 0.0 <= value <= 1.0
        fused = weights.alpha * r.s_text + weights.beta * r.s_struct + weights.gamma * r.s_heur
        assert r.s_ret == pytest.approx(fused, abs=1e-9)
    scores = [r.s_ret for r in results]
    assert scores == sorted(scores, reverse=True)


def test_retrieve_self_match_heuristic_only():
    corpus = [compiled(chain_graph([f"op{i}", "sinter"], record_id=f"g{i}",
                                   precursors=(f"pre{i}",))) for i in range(4)]
    memory = build_memory(corpus)
    query = rt.RetrievalQuery(summary=memory.by_graph_id()["g2"])
    results = rt.retrieve(query, memory, weights=rt.RetrievalWeights(0.0, 0.0, 1.0), k=2)
    assert results[0].graph_id == "g2"
    assert results[0].s_ret == pytest.approx(1.0, abs=1e-12)


def test_retrieve_self_match_default_weights_builtin_embedders():
    corpus = small_corpus(n=10)
    memory = rt.attach_embeddings(build_memory(corpus), corpus)
    for anchor in corpus[:3]:
        query = rt.RetrievalQuery(
            summary=memory.by_graph_id()[anchor.record_id],
            text=linearize_process(memory, anchor.record_id),
            context_graph=anchor,
        )
        results = rt.retrieve(query, memory)
        assert results[0].graph_id == anchor.record_id
        assert results[0].s_ret == pytest.approx(1.0, abs=1e-9)


def test_retrieve_returns_min_k_and_memory_size():
    corpus = small_corpus(n=12)
    memory = rt.attach_embeddings(build_memory(corpus), corpus)
    query = rt.RetrievalQuery(
        summary=memory.by_graph_id()[corpus[0].record_id],
        text=linearize_process(memory, corpus[0].record_id),
        context_graph=corpus[0],
    )
    assert len(rt.retrieve(query, memory)) == 8  # default k over 12 candidates
    small = rt.attach_embeddings(build_memory(corpus[:3]), corpus[:3])
    assert len(rt.retrieve(query, small)) == 3


def test_retrieve_ties_break_by_graph_id():
    graphs = [
        compiled(chain_graph(["mill", "sinter"], record_id="gb")),
        compiled(chain_graph(["mill", "sinter"], record_id="ga")),
    ]
    memory = rt.attach_embeddings(build_memory(graphs), graphs)
    query = rt.RetrievalQuery(
        summary=summary(["mill", "sinter"], ["lithium carbonate"]),
        text=linearize_process(memory, "ga"),
        context_graph=graphs[0],
    )
    results = rt.retrieve(query, memory, k=2)
    assert [r.graph_id for r in results] == ["ga", "gb"]
    assert results[0].s_ret == results[1].s_ret


def test_retrieve_empty_memory_raises():
    memory = build_memory(small_corpus(n=2))
    memory.processes = []
    with pytest.raises(EmptyMemory):
        rt.retrieve(rt.RetrievalQuery(summary=summary([], [])), memory)


def test_retrieve_invalid_k():
    memory = build_memory(small_corpus(n=2))
    with pytest.raises(InvalidParams):
        rt.retrieve(rt.RetrievalQuery(summary=summary([], [])), memory, k=0)


def test_retrieve_deterministic():
    corpus = small_corpus(n=9)
    memory = rt.attach_embeddings(build_memory(corpus), corpus)
    query = rt.RetrievalQuery(
        summary=memory.by_graph_id()[corpus[3].record_id],
        text=linearize_process(memory, corpus[3].record_id),
        context_graph=corpus[3],
    )
    first = [r.to_dict() for r in rt.retrieve(query, memory)]
    second = [r.to_dict() for r in rt.retrieve(query, memory)]
    assert first == second


def test_retrieve_backfills_missing_text_vectors():
    graphs = [compiled(chain_graph(["mill"], record_id="ga")),
              compiled(chain_graph(["sinter"], record_id="gb"))]
    memory = build_memory(graphs)  # no attach_embeddings on purpose
    query = rt.RetrievalQuery(summary=summary(["mill"], ["lithium carbonate"]),
                              text=linearize_process(memory, "ga"))
    results = rt.retrieve(query, memory, k=2)
    assert results[0].graph_id == "ga"
    assert set(memory.embedding_store) == {"ga", "gb"}  # computed lazily, then cached


# --- memory round-trip --------------------------------------------------------------


def test_attach_embeddings_round_trip(tmp_path):
    corpus = small_corpus(n=6)
    memory = rt.attach_embeddings(build_memory(corpus), corpus)
    for gid, entry in memory.embedding_store.items():
        assert set(entry) == {"text", "struct"}, gid
        assert np.linalg.norm(entry["text"]) == pytest.approx(1.0, abs=1e-9)
        assert np.linalg.norm(entry["struct"]) == pytest.approx(1.0, abs=1e-9)

    path = tmp_path / "memory.ndjson"
    save_memory(path, memory)
    reloaded = load_memory(path)
    query = rt.RetrievalQuery(
        summary=memory.by_graph_id()[corpus[1].record_id],
        text=linearize_process(memory, corpus[1].record_id),
        context_graph=corpus[1],
    )
    before = [r.to_dict() for r in rt.retrieve(query, memory)]
    after = [r.to_dict() for r in rt.retrieve(query, reloaded)]
    assert before == after


# --- query construction --------------------------------------------------------------


def bench_by_task():
    corpus = small_corpus(n=60, seed=11)
    items, _ = generate_benchmark(corpus, seed=5)
    graphs = {g.record_id: g for g in corpus}
    by_task = {}
    for item in items:
        by_task.setdefault(item.task, item)
    assert len(by_task) == 7
    return by_task, graphs


def test_query_from_item_visible_context():
    by_task, _ = bench_by_task()

    a1 = rt.query_from_item(by_task["A1_route_retrieval"])
    assert a1.summary.route == []
    assert a1.summary.products and a1.summary.precursors

    a2_item = by_task["A2_missing_step"]
    a2 = rt.query_from_item(a2_item)
    assert "?" not in a2.summary.route
    assert len(a2.summary.route) == len(a2_item.question["route_with_mask"]) - 1

    a3_item = by_task["A3_next_activity"]
    a3 = rt.query_from_item(a3_item)
    assert a3.summary.route == list(a3_item.question["prefix"])

    b1_item = by_task["B1_condition_prediction"]
    b1 = rt.query_from_item(b1_item)
    assert b1.summary.route == list(b1_item.question["route"])

    d_item = by_task["D_process_ordering"]
    d = rt.query_from_item(d_item)
    assert d.summary.route == sorted(s["label"] for s in d_item.question["steps"])

    for q in (a1, a2, a3, b1, d):
        assert q.summary.graph_id.startswith("query:")
        assert q.text  # non-empty linearization


def test_query_context_graphs_are_well_formed():
    corpus = small_corpus(n=30, seed=3)
    items, _ = generate_benchmark(corpus, seed=5)
    for item in items[:120]:
        query = rt.query_from_item(item)
        validate_graph(query.context_graph)
        assert query.context_graph.record_id == f"query:{item.item_id}"


def test_query_context_graph_d_task_mirrors_payload():
    by_task, _ = bench_by_task()
    item = by_task["D_process_ordering"]
    g = rt.query_from_item(item).context_graph
    assert [a.label for a in g.activities] == [s["label"] for s in item.question["steps"]]
    by_id = g.entity_by_id()
    for pos, step in enumerate(item.question["steps"]):
        act = g.activities[pos]
        assert sorted(by_id[e].label for e in g.used_by(act.id)) == sorted(set(step["inputs"]))
        assert sorted(by_id[e].label for e in g.generated_by(act.id)) == sorted(set(step["outputs"]))


def test_query_retrieval_end_to_end_over_items():
    corpus = small_corpus(n=25, seed=9)
    memory = rt.attach_embeddings(build_memory(corpus), corpus)
    items, _ = generate_benchmark(corpus, seed=5)
    for item in items[:40]:
        results = rt.retrieve(rt.query_from_item(item), memory)
        assert len(results) == 8
        assert all(0.0 <= r.s_ret <= 1.0 for r in results)
