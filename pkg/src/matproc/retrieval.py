"""Analogous-process retrieval over three fused views.

s_ret(q, p) = alpha * s_text + beta * s_struct + gamma * s_heur, with
cosine views affinely mapped from [-1, 1] onto [0, 1] so the weights act
on commensurate ranges. The text view embeds linearized process
descriptions (built-in hashed character n-grams, or an external endpoint
when configured); the structure view propagates label features through a
frozen, seed-derived attention encoder over the provenance graph; the
heuristic view averages activity overlap, route-length agreement and
precursor correspondence.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field

import numpy as np
import requests

from .canon import canon_label, derive_seed
from .errors import EmbedderUnavailable, EmptyMemory, InvalidParams
from .memory import ProcessMemory, ProcessSummary, jaccard, linearize_parts, linearize_process
from .provgraph import ProcessGraph
from .taskgen import MASK_TOKEN, BenchItem

EMBED_DIM = 512
NGRAM_SIZES = (3, 4, 5)
DEFAULT_STRUCT_SEED = 13
DEFAULT_TOP_K = 8

EMBED_URL_VAR = "MATPROC_EMBED_URL"
EMBED_TOKEN_VAR = "MATPROC_EMBED_TOKEN"


# --- weights ---------------------------------------------------------------------

@dataclass(frozen=True)
class RetrievalWeights:
    alpha: float = 0.4  # text
    beta: float = 0.3  # structure
    gamma: float = 0.3  # heuristic

    def __post_init__(self):
        for w in (self.alpha, self.beta, self.gamma):
            if w < 0:
                raise InvalidParams("retrieval weights must be non-negative")
        if abs(self.alpha + self.beta + self.gamma - 1.0) > 1e-9:
            raise InvalidParams("retrieval weights must sum to 1")

    @classmethod
    def for_views(cls, views) -> "RetrievalWeights":
        """Default weights restricted to a view subset and renormalized."""
        base = {"text": 0.4, "structure": 0.3, "heuristic": 0.3}
        unknown = set(views) - set(base)
        if unknown:
            raise InvalidParams(f"unknown retrieval views: {sorted(unknown)}")
        if not views:
            raise InvalidParams("at least one retrieval view required")
        kept = {name: (base[name] if name in views else 0.0) for name in base}
        total = sum(kept.values())
        return cls(
            alpha=kept["text"] / total,
            beta=kept["structure"] / total,
            gamma=kept["heuristic"] / total,
        )

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "gamma": self.gamma}


@dataclass
class RetrievedPrecedent:
    graph_id: str
    s_text: float
    s_struct: float
    s_heur: float
    s_ret: float

    def to_dict(self) -> dict:
        return {
            "graph_id": self.graph_id,
            "s_text": self.s_text,
            "s_struct": self.s_struct,
            "s_heur": self.s_heur,
            "s_ret": self.s_ret,
        }


# --- text embedding ----------------------------------------------------------------

class BuiltinTextEmbedder:
    """Hashed character n-gram frequencies; deterministic, no network."""

    dim = EMBED_DIM

    def embed(self, texts: list[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for row, text in enumerate(texts):
            for n in NGRAM_SIZES:
                for i in range(max(0, len(text) - n + 1)):
                    gram = text[i : i + n].encode("utf-8")
                    bucket = int.from_bytes(
                        hashlib.blake2b(gram, digest_size=4).digest(), "big"
                    ) % self.dim
                    out[row, bucket] += 1.0
        return _normalize_rows(out)


class EndpointTextEmbedder:
    """POST {"texts": [...]} -> {"vectors": [[...], ...]}."""

    def __init__(self, url: str, token: str | None = None, timeout: float = 30.0):
        self.url = url
        self.token = token
        self.timeout = timeout

    def embed(self, texts: list[str]) -> np.ndarray:
        headers = {"Authorization": f"Bearer {self.token}"} if self.token else {}
        try:
            response = requests.post(
                self.url, json={"texts": texts}, headers=headers, timeout=self.timeout
            )
            response.raise_for_status()
            vectors = response.json()["vectors"]
        except (requests.RequestException, KeyError, ValueError) as exc:
            raise EmbedderUnavailable(f"embedding endpoint failed: {exc}") from exc
        array = np.asarray(vectors, dtype=np.float64)
        if array.ndim != 2 or array.shape[0] != len(texts):
            raise EmbedderUnavailable(f"endpoint returned shape {array.shape}")
        return _normalize_rows(array)


def get_text_embedder(url: str | None = None, token: str | None = None):
    """Endpoint embedder when configured, built-in otherwise."""
    url = url if url is not None else os.environ.get(EMBED_URL_VAR, "")
    token = token if token is not None else os.environ.get(EMBED_TOKEN_VAR) or None
    return EndpointTextEmbedder(url, token) if url else BuiltinTextEmbedder()


def _normalize_rows(array: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(array, axis=1, keepdims=True)
    safe = np.where(norms == 0.0, 1.0, norms)
    return array / safe


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    # clip so downstream [0,1] mappings cannot drift out of range on fp noise
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def cos_to_unit(c: float) -> float:
    return (c + 1.0) / 2.0


# --- structure embedding -------------------------------------------------------------

def _frozen_projection(seed: int, round_index: int) -> np.ndarray:
    rng = np.random.default_rng(derive_seed(seed, "round", round_index))
    return rng.normal(0.0, 1.0 / np.sqrt(EMBED_DIM), size=(EMBED_DIM, EMBED_DIM))


def embed_structure(g: ProcessGraph, seed: int = DEFAULT_STRUCT_SEED) -> np.ndarray:
    """Two rounds of attention-weighted aggregation with frozen weights.

    Node features are built-in text embeddings of node labels; edges are
    the undirected union of usage and generation links; each round
    projects, attends over the closed neighbourhood, and squashes. The
    result depends only on the labelled structure, never on node order.
    """
    nodes = [*g.entities(), *g.activities]
    if not nodes:
        return np.zeros(EMBED_DIM, dtype=np.float64)
    index = {node.id: i for i, node in enumerate(nodes)}
    feats = BuiltinTextEmbedder().embed([canon_label(n.label) for n in nodes])

    neighbours: list[set[int]] = [{i} for i in range(len(nodes))]
    for src, dst in [*g.usage_edges, *g.generation_edges]:
        if src in index and dst in index:
            neighbours[index[src]].add(index[dst])
            neighbours[index[dst]].add(index[src])

    h = feats
    for round_index in range(2):
        w = _frozen_projection(seed, round_index)
        z = h @ w.T
        nxt = np.empty_like(z)
        for i, nbrs in enumerate(neighbours):
            idx = sorted(nbrs)
            scores = z[idx] @ z[i] / np.sqrt(EMBED_DIM)
            scores -= scores.max()
            att = np.exp(scores)
            att /= att.sum()
            nxt[i] = np.tanh(att @ z[idx])
        h = nxt

    pooled = h.mean(axis=0)
    norm = np.linalg.norm(pooled)
    return pooled / norm if norm > 0 else pooled


# --- heuristic view ---------------------------------------------------------------

def score_heuristic(q: ProcessSummary, p: ProcessSummary) -> float:
    """Mean of activity Jaccard, length agreement, precursor Jaccard."""
    activity = jaccard(q.route, p.route)
    lq, lp = q.route_length, p.route_length
    length = 1.0 if lq == lp == 0 else min(lq, lp) / max(lq, lp)
    precursor = jaccard(q.precursors, p.precursors)
    return (activity + length + precursor) / 3.0


# --- queries ----------------------------------------------------------------------

@dataclass
class RetrievalQuery:
    summary: ProcessSummary
    text: str = ""
    context_graph: ProcessGraph | None = None
    text_vec: np.ndarray | None = None
    struct_vec: np.ndarray | None = None


def query_from_item(item: BenchItem) -> RetrievalQuery:
    """Build the query process context from the visible payload only."""
    q = item.question
    precursors = list(q.get("precursors", []))
    product = q.get("product", "")
    if item.task == "A1_route_retrieval":
        visible: list[str] = []
    elif item.task == "A2_missing_step":
        visible = [x for x in q["route_with_mask"] if x != MASK_TOKEN]
    elif item.task == "A3_next_activity":
        visible = list(q["prefix"])
    elif item.task == "D_process_ordering":
        visible = sorted(s["label"] for s in q["steps"])
    else:  # B1 / B2 / C1 carry the full route
        visible = list(q.get("route", []))

    summary = ProcessSummary(
        graph_id=f"query:{item.item_id}",
        route=visible,
        precursors=precursors,
        products=[product] if product else [],
        tools=[],
    )
    text = linearize_parts(
        precursors=precursors,
        route_text=" -> ".join(visible),
        products=summary.products,
    )
    return RetrievalQuery(summary=summary, text=text, context_graph=_context_graph(item))


def _context_graph(item: BenchItem) -> ProcessGraph:
    """Minimal provenance graph over the visible payload."""
    from .provgraph import ActivityNode, EntityNode  # local: avoid wide import surface

    q = item.question
    g = ProcessGraph(record_id=f"query:{item.item_id}")
    eid = 0

    def add_material(label: str) -> str:
        nonlocal eid
        node_id = f"qe{eid}"
        eid += 1
        g.material_entities.append(EntityNode(id=node_id, label=label, kind="material"))
        return node_id

    if item.task == "D_process_ordering":
        by_label: dict[str, str] = {}
        for pos, step in enumerate(q["steps"]):
            act_id = f"qa{pos}"
            g.activities.append(ActivityNode(id=act_id, label=step["label"], source_position=pos))
            for label in step["inputs"]:
                if label not in by_label:
                    by_label[label] = add_material(label)
                edge = (by_label[label], act_id)
                if edge not in g.usage_edges:
                    g.usage_edges.append(edge)
            for label in step["outputs"]:
                if label not in by_label:
                    by_label[label] = add_material(label)
                edge = (act_id, by_label[label])
                if edge not in g.generation_edges:
                    g.generation_edges.append(edge)
        return g

    if item.task == "A2_missing_step":
        visible = [x for x in q["route_with_mask"] if x != MASK_TOKEN]
    elif item.task == "A3_next_activity":
        visible = list(q["prefix"])
    else:
        visible = list(q.get("route", []))

    named: dict[str, str] = {}

    def material(label: str) -> str:
        if label not in named:
            named[label] = add_material(label)
        return named[label]

    previous: str | None = None
    for pos, label in enumerate(visible):
        act_id = f"qa{pos}"
        g.activities.append(ActivityNode(id=act_id, label=label, source_position=pos))
        if pos == 0:
            for pre in q.get("precursors", []):
                g.usage_edges.append((material(pre), act_id))
        if previous is not None:
            link = add_material("intermediate")  # fresh node per hand-off
            g.generation_edges.append((previous, link))
            g.usage_edges.append((link, act_id))
        previous = act_id
    if previous is not None and q.get("product"):
        g.generation_edges.append((previous, material(q["product"])))
    elif previous is None:
        for pre in q.get("precursors", []):
            material(pre)
        if q.get("product"):
            material(q["product"])
    inputs = q.get("step_inputs", [])
    if inputs and q.get("step_index") is not None and q["step_index"] < len(g.activities):
        target = g.activities[q["step_index"]].id
        for label in inputs:
            node_id = material(label)
            if (node_id, target) not in g.usage_edges:
                g.usage_edges.append((node_id, target))
    return g


# --- memory-side embeddings -----------------------------------------------------------

def attach_embeddings(
    memory: ProcessMemory,
    graphs: list[ProcessGraph],
    struct_seed: int = DEFAULT_STRUCT_SEED,
    text_embedder=None,
) -> ProcessMemory:
    """Fill memory.embedding_store for every stored process."""
    embedder = text_embedder or BuiltinTextEmbedder()
    known = memory.graph_ids()
    graphs_by_id = {g.record_id: g for g in graphs if g.record_id in known}
    ids = [p.graph_id for p in memory.processes]
    texts = [linearize_process(memory, graph_id) for graph_id in ids]
    text_vecs = embedder.embed(texts)
    for row, graph_id in enumerate(ids):
        entry = {"text": [float(x) for x in text_vecs[row]]}
        g = graphs_by_id.get(graph_id)
        if g is not None:
            entry["struct"] = [float(x) for x in embed_structure(g, seed=struct_seed)]
        memory.embedding_store[graph_id] = entry
    return memory


def _stored_vec(memory: ProcessMemory, graph_id: str, kind: str) -> np.ndarray | None:
    entry = memory.embedding_store.get(graph_id, {})
    vec = entry.get(kind)
    return np.asarray(vec, dtype=np.float64) if vec is not None else None


def text_vector(memory: ProcessMemory, graph_id: str) -> np.ndarray:
    """Stored text vector for one process; derived and cached when absent."""
    vec = _stored_vec(memory, graph_id, "text")
    if vec is None:
        vec = BuiltinTextEmbedder().embed([linearize_process(memory, graph_id)])[0]
        memory.embedding_store.setdefault(graph_id, {})["text"] = [float(x) for x in vec]
    return vec


# --- fusion -----------------------------------------------------------------------

def retrieve(
    query: RetrievalQuery,
    memory: ProcessMemory,
    weights: RetrievalWeights = RetrievalWeights(),
    k: int = DEFAULT_TOP_K,
    text_embedder=None,
    struct_seed: int = DEFAULT_STRUCT_SEED,
) -> list[RetrievedPrecedent]:
    """Exhaustive scan, descending s_ret, ties by ascending graph_id."""
    if not memory.processes:
        raise EmptyMemory("retrieval requested against an empty memory")
    if k < 1:
        raise InvalidParams("k must be >= 1")

    if weights.alpha > 0 and query.text_vec is None:
        embedder = text_embedder or BuiltinTextEmbedder()
        query.text_vec = embedder.embed([query.text])[0]
    if weights.beta > 0 and query.struct_vec is None and query.context_graph is not None:
        query.struct_vec = embed_structure(query.context_graph, seed=struct_seed)

    results = []
    for p in memory.processes:
        s_text = s_struct = 0.0
        if weights.alpha > 0:
            s_text = cos_to_unit(cosine(query.text_vec, text_vector(memory, p.graph_id)))
        if weights.beta > 0:
            vec = _stored_vec(memory, p.graph_id, "struct")
            if vec is not None and query.struct_vec is not None:
                s_struct = cos_to_unit(cosine(query.struct_vec, vec))
            else:
                s_struct = 0.5  # neutral when either side has no structure view
        s_heur = score_heuristic(query.summary, p)
        s_ret = weights.alpha * s_text + weights.beta * s_struct + weights.gamma * s_heur
        results.append(
            RetrievedPrecedent(
                graph_id=p.graph_id,
                s_text=s_text,
                s_struct=s_struct,
                s_heur=s_heur,
                s_ret=s_ret,
            )
        )
    results.sort(key=lambda r: (-r.s_ret, r.graph_id))
    return results[:k]
