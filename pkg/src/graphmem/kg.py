"""Open knowledge graph: phrase/passage nodes, typed weighted edges, triples.

Node ids are small contiguous integers shared by both node kinds, assigned in
insertion order, which keeps every derived array (embeddings, transition
matrix, PageRank vectors) directly indexable by node id.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import ConflictError, FrozenIndexError, NotFoundError, ValidationError

logger = logging.getLogger(__name__)

RELATION = "relation"
SYNONYM = "synonym"
CONTEXT = "context"
EDGE_KINDS = (RELATION, SYNONYM, CONTEXT)


def normalize_phrase(text: str) -> str:
    """Canonical form used to deduplicate phrase nodes: casefold, trim, collapse whitespace."""
    return " ".join(text.casefold().split())


@dataclass
class PhraseNode:
    id: int
    text: str
    raw_forms: set[str] = field(default_factory=set)


@dataclass
class PassageNode:
    id: int
    doc_id: str
    title: str | None
    text: str


@dataclass(frozen=True)
class Triple:
    id: int
    subject_id: int
    relation: str
    object_id: int
    source_passage_id: int


@dataclass(frozen=True)
class Edge:
    u: int
    v: int
    kind: str
    weight: float


@dataclass(frozen=True)
class GraphStats:
    phrase_nodes: int
    passage_nodes: int
    relation_edges: int
    synonym_edges: int
    context_edges: int

    @property
    def total_nodes(self) -> int:
        return self.phrase_nodes + self.passage_nodes

    @property
    def total_edges(self) -> int:
        return self.relation_edges + self.synonym_edges + self.context_edges

    def as_dict(self) -> dict:
        return {
            "phrase_nodes": self.phrase_nodes,
            "passage_nodes": self.passage_nodes,
            "total_nodes": self.total_nodes,
            "relation_edges": self.relation_edges,
            "synonym_edges": self.synonym_edges,
            "context_edges": self.context_edges,
            "total_edges": self.total_edges,
        }


class OpenKG:
    """Mutable during the build phase; immutable and read-share-safe after freeze()."""

    def __init__(self, synonym_threshold: float = 0.8, accumulate_relation_weights: bool = False):
        if not 0.0 < synonym_threshold <= 1.0:
            raise ValidationError(f"synonym threshold must be in (0, 1], got {synonym_threshold}")
        self.synonym_threshold = float(synonym_threshold)
        self.accumulate_relation_weights = bool(accumulate_relation_weights)
        self._phrases: dict[int, PhraseNode] = {}
        self._passages: dict[int, PassageNode] = {}
        self._phrase_by_norm: dict[str, int] = {}
        self._passage_by_doc: dict[str, int] = {}
        self._edges: dict[tuple[int, int, str], float] = {}
        self._triples: dict[int, Triple] = {}
        self._triple_by_key: dict[tuple[int, str, int, int], int] = {}
        self._context: dict[int, set[int]] = {}
        self._next_node_id = 0
        self._next_triple_id = 0
        self._frozen = False
        self._transition: tuple[sparse.csr_matrix, np.ndarray] | None = None

    # -- introspection -------------------------------------------------------

    @property
    def frozen(self) -> bool:
        return self._frozen

    @property
    def node_count(self) -> int:
        return self._next_node_id

    @property
    def triple_count(self) -> int:
        return len(self._triples)

    def is_phrase(self, node_id: int) -> bool:
        return node_id in self._phrases

    def is_passage(self, node_id: int) -> bool:
        return node_id in self._passages

    def phrase(self, node_id: int) -> PhraseNode:
        try:
            return self._phrases[node_id]
        except KeyError:
            raise NotFoundError(f"no phrase node {node_id}") from None

    def passage(self, node_id: int) -> PassageNode:
        try:
            return self._passages[node_id]
        except KeyError:
            raise NotFoundError(f"no passage node {node_id}") from None

    def triple(self, triple_id: int) -> Triple:
        try:
            return self._triples[triple_id]
        except KeyError:
            raise NotFoundError(f"no triple {triple_id}") from None

    def phrase_id_for_text(self, text: str) -> int | None:
        return self._phrase_by_norm.get(normalize_phrase(text))

    def passage_id_for_doc(self, doc_id: str) -> int:
        try:
            return self._passage_by_doc[doc_id]
        except KeyError:
            raise NotFoundError(f"no passage with doc_id {doc_id!r}") from None

    def has_doc(self, doc_id: str) -> bool:
        return doc_id in self._passage_by_doc

    def phrase_ids(self) -> list[int]:
        return sorted(self._phrases)

    def passage_ids(self) -> list[int]:
        return sorted(self._passages)

    def triple_ids(self) -> list[int]:
        return sorted(self._triples)

    def triple_text(self, triple_id: int) -> tuple[str, str, str]:
        t = self.triple(triple_id)
        return (self._phrases[t.subject_id].text, t.relation, self._phrases[t.object_id].text)

    def context_phrases(self, passage_node_id: int) -> set[int]:
        """Phrase nodes linked to a passage by context edges."""
        self.passage(passage_node_id)
        return set(self._context.get(passage_node_id, set()))

    def edge_records(self) -> list[Edge]:
        """All edges in canonical order (u < v, sorted by endpoints then kind)."""
        return [
            Edge(u, v, kind, w)
            for (u, v, kind), w in sorted(self._edges.items())
        ]

    def neighbors(self, node_id: int) -> list[tuple[int, float]]:
        """Adjacent nodes with per-pair aggregate weight, ascending by neighbor id."""
        if node_id >= self._next_node_id or node_id < 0:
            raise NotFoundError(f"no node {node_id}")
        agg: dict[int, float] = {}
        for (u, v, _kind), w in self._edges.items():
            if u == node_id:
                agg[v] = agg.get(v, 0.0) + w
            elif v == node_id:
                agg[u] = agg.get(u, 0.0) + w
        return sorted(agg.items())

    def graph_stats(self) -> GraphStats:
        kinds = Counter(kind for (_u, _v, kind) in self._edges)
        return GraphStats(
            phrase_nodes=len(self._phrases),
            passage_nodes=len(self._passages),
            relation_edges=kinds[RELATION],
            synonym_edges=kinds[SYNONYM],
            context_edges=kinds[CONTEXT],
        )

    # -- mutation ------------------------------------------------------------

    def _check_mutable(self) -> None:
        if self._frozen:
            raise FrozenIndexError("graph is frozen; build-phase mutation is not allowed")

    def upsert_phrase(self, text: str) -> int:
        self._check_mutable()
        norm = normalize_phrase(text)
        if not norm:
            raise ValidationError("phrase text is empty after normalization")
        existing = self._phrase_by_norm.get(norm)
        if existing is not None:
            self._phrases[existing].raw_forms.add(text)
            return existing
        node_id = self._next_node_id
        self._next_node_id += 1
        self._phrases[node_id] = PhraseNode(id=node_id, text=norm, raw_forms={text})
        self._phrase_by_norm[norm] = node_id
        return node_id

    def add_passage(self, doc_id: str, title: str | None, text: str) -> int:
        self._check_mutable()
        if not text:
            raise ValidationError("passage text must be non-empty")
        if doc_id in self._passage_by_doc:
            raise ConflictError(f"doc_id {doc_id!r} already indexed")
        node_id = self._next_node_id
        self._next_node_id += 1
        self._passages[node_id] = PassageNode(id=node_id, doc_id=doc_id, title=title, text=text)
        self._passage_by_doc[doc_id] = node_id
        return node_id

    def add_triple(self, subject_text: str, relation: str, object_text: str,
                   source_passage_id: int) -> int:
        self._check_mutable()
        if source_passage_id not in self._passages:
            raise NotFoundError(f"no passage node {source_passage_id}")
        relation = relation.strip()
        if not relation:
            raise ValidationError("relation must be non-empty")
        s_id = self.upsert_phrase(subject_text)
        o_id = self.upsert_phrase(object_text)
        key = (s_id, relation, o_id, source_passage_id)
        existing = self._triple_by_key.get(key)
        if existing is not None:
            return existing
        if s_id != o_id:
            self._add_relation_edge(s_id, o_id)
        self._add_edge(source_passage_id, s_id, CONTEXT, 1.0)
        self._add_edge(source_passage_id, o_id, CONTEXT, 1.0)
        self._context.setdefault(source_passage_id, set()).update((s_id, o_id))
        triple_id = self._next_triple_id
        self._next_triple_id += 1
        self._triples[triple_id] = Triple(
            id=triple_id, subject_id=s_id, relation=relation,
            object_id=o_id, source_passage_id=source_passage_id,
        )
        self._triple_by_key[key] = triple_id
        return triple_id

    def add_synonym_edge(self, a: int, b: int, similarity: float) -> None:
        self._check_mutable()
        if a == b:
            raise ValidationError("synonym edge endpoints must differ")
        if a not in self._phrases or b not in self._phrases:
            raise ValidationError("synonym edges connect phrase nodes only")
        similarity = float(similarity)
        if similarity > 1.0:
            if similarity > 1.0 + 1e-6:
                raise ValidationError(f"similarity {similarity} exceeds 1")
            similarity = 1.0
        if similarity < self.synonym_threshold:
            raise ValidationError(
                f"similarity {similarity} below threshold {self.synonym_threshold}")
        self._add_edge(a, b, SYNONYM, similarity)

    def _add_relation_edge(self, a: int, b: int) -> None:
        key = (min(a, b), max(a, b), RELATION)
        if key in self._edges and self.accumulate_relation_weights:
            self._edges[key] += 1.0
        else:
            self._edges.setdefault(key, 1.0)

    def _add_edge(self, a: int, b: int, kind: str, weight: float) -> None:
        if a == b:
            raise ValidationError("self-loop edges are not allowed")
        if weight <= 0.0:
            raise ValidationError("edge weight must be positive")
        self._edges[(min(a, b), max(a, b), kind)] = weight

    # -- freezing and transitions ---------------------------------------------

    def freeze(self) -> OpenKG:
        """Make the graph immutable and precompute the walk transition matrix."""
        if not self._frozen:
            self._frozen = True
            self._transition = self._build_transition()
        return self

    def transition(self) -> tuple[sparse.csr_matrix, np.ndarray]:
        """Column-stochastic transition matrix M (M[j, i] = w(i,j)/deg(i)) and dangling mask."""
        if not self._frozen:
            raise ValidationError("graph must be frozen before running walks")
        assert self._transition is not None
        return self._transition

    def _build_transition(self) -> tuple[sparse.csr_matrix, np.ndarray]:
        n = self._next_node_id
        pair_weight: dict[tuple[int, int], float] = {}
        for (u, v, _kind), w in self._edges.items():
            pair_weight[(u, v)] = pair_weight.get((u, v), 0.0) + w
        deg = np.zeros(n, dtype=np.float64)
        pairs = sorted(pair_weight)
        m = len(pairs)
        rows = np.empty(2 * m, dtype=np.int64)
        cols = np.empty(2 * m, dtype=np.int64)
        vals = np.empty(2 * m, dtype=np.float64)
        for i, (u, v) in enumerate(pairs):
            w = pair_weight[(u, v)]
            deg[u] += w
            deg[v] += w
            rows[2 * i], cols[2 * i], vals[2 * i] = v, u, w
            rows[2 * i + 1], cols[2 * i + 1], vals[2 * i + 1] = u, v, w
        dangling = deg == 0.0
        if m:
            vals = vals / deg[cols]
        matrix = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
        return matrix, dangling

    def thaw_copy(self) -> OpenKG:
        """Unfrozen deep copy, used to extend an existing index."""
        clone = OpenKG(self.synonym_threshold, self.accumulate_relation_weights)
        clone._phrases = {
            i: PhraseNode(id=p.id, text=p.text, raw_forms=set(p.raw_forms))
            for i, p in self._phrases.items()
        }
        clone._passages = {
            i: PassageNode(id=p.id, doc_id=p.doc_id, title=p.title, text=p.text)
            for i, p in self._passages.items()
        }
        clone._phrase_by_norm = dict(self._phrase_by_norm)
        clone._passage_by_doc = dict(self._passage_by_doc)
        clone._edges = dict(self._edges)
        clone._triples = dict(self._triples)
        clone._triple_by_key = dict(self._triple_by_key)
        clone._context = {k: set(v) for k, v in self._context.items()}
        clone._next_node_id = self._next_node_id
        clone._next_triple_id = self._next_triple_id
        return clone

    # -- reconstruction (persistence) ------------------------------------------

    @classmethod
    def from_tables(cls, phrases: list[PhraseNode], passages: list[PassageNode],
                    edges: list[Edge], triples: list[Triple],
                    synonym_threshold: float = 0.8,
                    accumulate_relation_weights: bool = False) -> OpenKG:
        """Rebuild a frozen graph from persisted tables, preserving node ids."""
        kg = cls(synonym_threshold, accumulate_relation_weights)
        max_id = -1
        for p in phrases:
            if normalize_phrase(p.text) != p.text:
                raise ValidationError(f"phrase {p.id} text is not normalized")
            if p.text in kg._phrase_by_norm:
                raise ValidationError(f"duplicate phrase text {p.text!r}")
            kg._phrases[p.id] = p
            kg._phrase_by_norm[p.text] = p.id
            max_id = max(max_id, p.id)
        for p in passages:
            if p.id in kg._phrases:
                raise ValidationError(f"node id {p.id} used by both kinds")
            if p.doc_id in kg._passage_by_doc:
                raise ValidationError(f"duplicate doc_id {p.doc_id!r}")
            kg._passages[p.id] = p
            kg._passage_by_doc[p.doc_id] = p.id
            max_id = max(max_id, p.id)
        kg._next_node_id = max_id + 1
        for e in edges:
            if e.kind not in EDGE_KINDS:
                raise ValidationError(f"unknown edge kind {e.kind!r}")
            kg._validate_endpoints(e)
            kg._edges[(e.u, e.v, e.kind)] = e.weight
        max_tid = -1
        for t in triples:
            for endpoint in (t.subject_id, t.object_id):
                if endpoint not in kg._phrases:
                    raise ValidationError(f"triple {t.id} references missing phrase {endpoint}")
            if t.source_passage_id not in kg._passages:
                raise ValidationError(f"triple {t.id} references missing passage")
            kg._triples[t.id] = t
            kg._triple_by_key[(t.subject_id, t.relation, t.object_id, t.source_passage_id)] = t.id
            kg._context.setdefault(t.source_passage_id, set()).update((t.subject_id, t.object_id))
            max_tid = max(max_tid, t.id)
        kg._next_triple_id = max_tid + 1
        return kg.freeze()

    def _validate_endpoints(self, e: Edge) -> None:
        if e.u == e.v:
            raise ValidationError("self-loop edge in table")
        both_phrase = e.u in self._phrases and e.v in self._phrases
        if e.kind in (RELATION, SYNONYM):
            if not both_phrase:
                raise ValidationError(f"{e.kind} edge must connect two phrase nodes")
        elif e.kind == CONTEXT:
            u_pass = e.u in self._passages
            v_pass = e.v in self._passages
            if u_pass == v_pass:
                raise ValidationError("context edge must connect a passage to a phrase")
