"""Offline indexing pipeline: extract triples, build the graph, embed, link synonyms."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embedding import (EmbeddingProviderConfig, VectorStore, VectorStores,
                        build_embedder, detect_synonyms)
from .errors import ConfigError, ProviderError, ValidationError
from .extraction import ExtractionClientConfig, build_extractor
from .kg import GraphStats, OpenKG
from .storage import GraphIndex, IndexManifest

logger = logging.getLogger(__name__)


@dataclass
class CorpusRecord:
    doc_id: str
    title: str | None = None
    text: str = ""
    fixture_triples: list[tuple[str, str, str]] | None = None


@dataclass
class IndexConfig:
    embedding: EmbeddingProviderConfig = field(default_factory=EmbeddingProviderConfig)
    extraction: ExtractionClientConfig = field(default_factory=ExtractionClientConfig)
    synonym_threshold: float = 0.8
    accumulate_relation_weights: bool = False
    passage_embed_includes_title: bool = True
    # retrieval-time defaults recorded in the manifest
    damping: float = 0.5
    passage_weight_factor: float = 0.05


@dataclass
class IndexReport:
    stats: GraphStats
    wall_time_s: float
    stage_seconds: dict[str, float]
    extraction_failures: int
    skipped_triples: int = 0

    def as_dict(self) -> dict:
        return {
            "stats": self.stats.as_dict(),
            "wall_time_s": self.wall_time_s,
            "stage_seconds": self.stage_seconds,
            "extraction_failures": self.extraction_failures,
            "skipped_triples": self.skipped_triples,
        }


def read_corpus_jsonl(path: str | Path) -> list[CorpusRecord]:
    """One record per line: {"doc_id", "title"?, "text", "triples"?: [[s, r, o], ...]}."""
    records = []
    try:
        handle = open(path, encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read corpus file {path}: {exc}") from exc
    with handle:
        for line_no, line in enumerate(handle, 1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
            if "doc_id" not in raw or "text" not in raw:
                raise ValidationError(f"{path}:{line_no}: record needs doc_id and text")
            triples = raw.get("triples")
            fixture = [tuple(t) for t in triples] if triples is not None else None
            records.append(CorpusRecord(doc_id=str(raw["doc_id"]), title=raw.get("title"),
                                        text=raw["text"], fixture_triples=fixture))
    return records


def extract_triples(record: CorpusRecord, client) -> list[tuple[str, str, str]]:
    """Fixture triples bypass the client; otherwise delegate to it."""
    if not record.text or not record.text.strip():
        raise ValidationError(f"passage {record.doc_id!r} has empty text")
    if record.fixture_triples is not None:
        return list(record.fixture_triples)
    return client.extract(record.text).triples


def passage_embed_text(record: CorpusRecord, include_title: bool) -> str:
    if include_title and record.title:
        return f"{record.title}\n{record.text}"
    return record.text


def triple_embed_text(subject: str, relation: str, obj: str) -> str:
    return f"{subject} | {relation} | {obj}"


def build_index(corpus: list[CorpusRecord], config: IndexConfig | None = None,
                base: GraphIndex | None = None) -> tuple[GraphIndex, IndexReport]:
    """Run the offline pipeline: extraction, graph insertion, embedding, synonym edges.

    With ``base`` given, the existing index is extended in place of a full
    rebuild: prior nodes keep their ids and embeddings, only new records are
    extracted and embedded, and the result is identical to re-indexing the
    concatenated corpus. Extraction failures are logged and counted but never
    abort the build.
    """
    config = config or IndexConfig()
    if not corpus:
        raise ValidationError("corpus must be non-empty")
    seen = set()
    for record in corpus:
        if record.doc_id in seen:
            raise ValidationError(f"duplicate doc_id {record.doc_id!r} in corpus")
        seen.add(record.doc_id)

    embedder = build_embedder(config.embedding)
    extractor = build_extractor(config.extraction)
    started = time.perf_counter()
    stage_seconds: dict[str, float] = {}

    if base is not None:
        if base.manifest.provider_fingerprints.get("embedding") != embedder.fingerprint:
            raise ConfigError("base index was built with a different embedding provider")
        kg = base.kg.thaw_copy()
    else:
        kg = OpenKG(synonym_threshold=config.synonym_threshold,
                    accumulate_relation_weights=config.accumulate_relation_weights)

    failures = 0
    skipped_triples = 0
    records_by_passage: dict[int, CorpusRecord] = {}
    stage_start = time.perf_counter()
    for record in corpus:
        passage_id = kg.add_passage(record.doc_id, record.title, record.text)
        records_by_passage[passage_id] = record
        try:
            triples = extract_triples(record, extractor)
        except ProviderError as exc:
            logger.warning("extraction failed for %s: %s", record.doc_id, exc)
            failures += 1
            continue
        for subject, relation, obj in triples:
            try:
                kg.add_triple(subject, relation, obj, passage_id)
            except ValidationError as exc:
                logger.warning("skipping triple %r from %s: %s",
                               (subject, relation, obj), record.doc_id, exc)
                skipped_triples += 1
    stage_seconds["extract"] = time.perf_counter() - stage_start

    stage_start = time.perf_counter()
    stores = _embed_all(kg, records_by_passage, embedder, config, base)
    stage_seconds["embed"] = time.perf_counter() - stage_start

    stage_start = time.perf_counter()
    synonym_pairs = detect_synonyms(stores.phrase, config.synonym_threshold)
    for a, b, similarity in synonym_pairs:
        kg.add_synonym_edge(a, b, similarity)
    stage_seconds["synonyms"] = time.perf_counter() - stage_start

    kg.freeze()
    stats = kg.graph_stats()
    report = IndexReport(stats=stats, wall_time_s=time.perf_counter() - started,
                         stage_seconds=stage_seconds, extraction_failures=failures,
                         skipped_triples=skipped_triples)
    manifest = IndexManifest(
        embedding_dim=config.embedding.dim,
        synonym_threshold=config.synonym_threshold,
        damping=config.damping,
        passage_weight_factor=config.passage_weight_factor,
        provider_fingerprints={
            "embedding": embedder.fingerprint,
            "extraction": extractor.fingerprint,
        },
        passage_embed_includes_title=config.passage_embed_includes_title,
        accumulate_relation_weights=config.accumulate_relation_weights,
    )
    index = GraphIndex(kg=kg, stores=stores, manifest=manifest)
    logger.info("indexed %d passages: %s", len(corpus), stats.as_dict())
    return index, report


def _embed_all(kg: OpenKG, records_by_passage: dict[int, CorpusRecord], embedder,
               config: IndexConfig, base: GraphIndex | None) -> VectorStores:
    dim = config.embedding.dim

    def build_store(kind: str, ids: list[int], texts: list[str]) -> VectorStore:
        old = getattr(base.stores, kind) if base is not None else None
        old_ids = set(old.ids.tolist()) if old is not None else set()
        position = {item_id: row for row, item_id in enumerate(ids)}
        new_ids = [i for i in ids if i not in old_ids]
        new_texts = [texts[position[i]] for i in new_ids]
        blocks = []
        if old is not None and len(old):
            blocks.append(old.matrix)
        if new_texts:
            blocks.append(embedder.embed_texts(new_texts, kind=kind))
        matrix = np.vstack(blocks) if blocks else np.empty((0, dim), dtype=np.float32)
        all_ids = (old.ids.tolist() if old is not None else []) + new_ids
        if matrix.shape[1] != dim:
            raise ConfigError(
                f"provider produced dimension {matrix.shape[1]}, expected {dim}")
        return VectorStore(kind, all_ids, matrix)

    phrase_ids = kg.phrase_ids()
    phrase_texts = [kg.phrase(i).text for i in phrase_ids]

    passage_ids = kg.passage_ids()
    passage_texts = []
    for i in passage_ids:
        record = records_by_passage.get(i)
        if record is None:
            node = kg.passage(i)
            record = CorpusRecord(doc_id=node.doc_id, title=node.title, text=node.text)
        passage_texts.append(passage_embed_text(record, config.passage_embed_includes_title))

    triple_ids = kg.triple_ids()
    triple_texts = [triple_embed_text(*kg.triple_text(i)) for i in triple_ids]

    return VectorStores(
        phrase=build_store("phrase", phrase_ids, phrase_texts),
        passage=build_store("passage", passage_ids, passage_texts),
        triple=build_store("triple", triple_ids, triple_texts),
    )
