"""Versioned on-disk index format.

An index directory holds one file per table plus a manifest:

    manifest.json          format version, dims, hyperparameters, digests
    nodes.jsonl            phrase and passage nodes, ordered by node id
    triples.jsonl          triple records, ordered by triple id
    edges.bin              fixed-width little-endian records (u, v, kind, weight)
    {kind}_vectors.f32     little-endian float32 matrix, row-major
    {kind}_vectors.ids     one id per line, aligned with the matrix rows

String-bearing tables are JSONL for diffability; numeric tables are packed
binary. All writers are deterministic: rebuilding the same corpus with the
same config yields byte-identical directories.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embedding import VectorStore, VectorStores
from .errors import IndexFormatError
from .kg import CONTEXT, RELATION, SYNONYM, Edge, OpenKG, PassageNode, PhraseNode, Triple

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1

_KIND_CODE = {RELATION: 0, SYNONYM: 1, CONTEXT: 2}
_CODE_KIND = {v: k for k, v in _KIND_CODE.items()}
_EDGE_DTYPE = np.dtype([("u", "<u4"), ("v", "<u4"), ("kind", "<u1"), ("weight", "<f8")])
_STORE_KINDS = ("phrase", "passage", "triple")


@dataclass
class IndexManifest:
    format_version: int = FORMAT_VERSION
    embedding_dim: int = 256
    synonym_threshold: float = 0.8
    damping: float = 0.5
    passage_weight_factor: float = 0.05
    provider_fingerprints: dict[str, str] = field(default_factory=dict)
    passage_embed_includes_title: bool = True
    accumulate_relation_weights: bool = False
    fingerprint: str = ""
    file_digests: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> IndexManifest:
        known = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass
class GraphIndex:
    """Frozen retrieval index: graph, vector stores, manifest."""

    kg: OpenKG
    stores: VectorStores
    manifest: IndexManifest


def _dumps(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def save_index(index: GraphIndex, path: str | Path) -> None:
    """Write the index directory; the graph must be frozen first."""
    kg = index.kg
    if not kg.frozen:
        raise IndexFormatError("refusing to save an unfrozen graph")
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)

    with open(out / "nodes.jsonl", "w", encoding="utf-8") as handle:
        for node_id in range(kg.node_count):
            if kg.is_phrase(node_id):
                p = kg.phrase(node_id)
                record = {"id": p.id, "kind": "phrase", "text": p.text,
                          "raw_forms": sorted(p.raw_forms)}
            else:
                p = kg.passage(node_id)
                record = {"id": p.id, "kind": "passage", "doc_id": p.doc_id,
                          "title": p.title, "text": p.text}
            handle.write(_dumps(record) + "\n")

    with open(out / "triples.jsonl", "w", encoding="utf-8") as handle:
        for triple_id in kg.triple_ids():
            t = kg.triple(triple_id)
            handle.write(_dumps({
                "id": t.id, "subject": t.subject_id, "relation": t.relation,
                "object": t.object_id, "passage": t.source_passage_id,
            }) + "\n")

    edges = kg.edge_records()
    edge_array = np.empty(len(edges), dtype=_EDGE_DTYPE)
    for i, e in enumerate(edges):
        edge_array[i] = (e.u, e.v, _KIND_CODE[e.kind], e.weight)
    (out / "edges.bin").write_bytes(edge_array.tobytes())

    for kind in _STORE_KINDS:
        store: VectorStore = getattr(index.stores, kind)
        (out / f"{kind}_vectors.f32").write_bytes(
            np.ascontiguousarray(store.matrix, dtype="<f4").tobytes())
        with open(out / f"{kind}_vectors.ids", "w", encoding="utf-8") as handle:
            for item_id in store.ids.tolist():
                handle.write(f"{item_id}\n")

    manifest = index.manifest
    manifest.format_version = FORMAT_VERSION
    manifest.file_digests = {
        name: _sha256(out / name) for name in sorted(_table_names())
    }
    core = manifest.to_dict()
    core.pop("fingerprint", None)
    manifest.fingerprint = hashlib.sha256(_dumps(core).encode("utf-8")).hexdigest()
    with open(out / "manifest.json", "w", encoding="utf-8") as handle:
        handle.write(json.dumps(manifest.to_dict(), sort_keys=True, ensure_ascii=False,
                                indent=2) + "\n")
    logger.info("saved index to %s (%d nodes, %d edges)", out, kg.node_count, len(edges))


def _table_names() -> list[str]:
    names = ["nodes.jsonl", "triples.jsonl", "edges.bin"]
    names.extend(f"{kind}_vectors.f32" for kind in _STORE_KINDS)
    names.extend(f"{kind}_vectors.ids" for kind in _STORE_KINDS)
    return names


def load_index(path: str | Path) -> GraphIndex:
    """Load and verify an index directory; raises IndexFormatError on any defect."""
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise IndexFormatError(f"{root} is not an index directory (no manifest.json)")
    try:
        manifest = IndexManifest.from_dict(json.loads(manifest_path.read_text("utf-8")))
    except (json.JSONDecodeError, TypeError) as exc:
        raise IndexFormatError(f"manifest.json is unreadable: {exc}") from exc
    if manifest.format_version != FORMAT_VERSION:
        raise IndexFormatError(
            f"index format version {manifest.format_version} unsupported"
            f" (expected {FORMAT_VERSION})")
    for name in _table_names():
        table = root / name
        if not table.is_file():
            raise IndexFormatError(f"missing table file {name}")
        expected = manifest.file_digests.get(name)
        actual = _sha256(table)
        if expected != actual:
            raise IndexFormatError(f"table {name} is corrupt (digest mismatch)")

    phrases: list[PhraseNode] = []
    passages: list[PassageNode] = []
    try:
        with open(root / "nodes.jsonl", encoding="utf-8") as handle:
            for line in handle:
                record = json.loads(line)
                if record["kind"] == "phrase":
                    phrases.append(PhraseNode(id=record["id"], text=record["text"],
                                              raw_forms=set(record["raw_forms"])))
                elif record["kind"] == "passage":
                    passages.append(PassageNode(id=record["id"], doc_id=record["doc_id"],
                                                title=record["title"], text=record["text"]))
                else:
                    raise IndexFormatError(f"unknown node kind {record['kind']!r}")
        triples = []
        with open(root / "triples.jsonl", encoding="utf-8") as handle:
            for line in handle:
                record = json.loads(line)
                triples.append(Triple(id=record["id"], subject_id=record["subject"],
                                      relation=record["relation"], object_id=record["object"],
                                      source_passage_id=record["passage"]))
        raw_edges = np.frombuffer((root / "edges.bin").read_bytes(), dtype=_EDGE_DTYPE)
        edges = [Edge(int(r["u"]), int(r["v"]), _CODE_KIND[int(r["kind"])], float(r["weight"]))
                 for r in raw_edges]
    except (KeyError, json.JSONDecodeError, ValueError) as exc:
        raise IndexFormatError(f"index tables are corrupt: {exc}") from exc

    kg = OpenKG.from_tables(
        phrases, passages, edges, triples,
        synonym_threshold=manifest.synonym_threshold,
        accumulate_relation_weights=manifest.accumulate_relation_weights)

    stores = {}
    dim = manifest.embedding_dim
    for kind in _STORE_KINDS:
        ids = [int(line) for line in
               (root / f"{kind}_vectors.ids").read_text("utf-8").splitlines()]
        raw = np.frombuffer((root / f"{kind}_vectors.f32").read_bytes(), dtype="<f4")
        if dim > 0 and raw.size != len(ids) * dim:
            raise IndexFormatError(f"{kind} vector table size mismatch")
        matrix = raw.reshape(len(ids), dim) if ids else np.empty((0, dim), dtype=np.float32)
        stores[kind] = VectorStore(kind, ids, matrix)

    return GraphIndex(kg=kg, stores=VectorStores(**stores), manifest=manifest)
