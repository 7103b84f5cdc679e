"""Retrieval/QA metrics and evaluation harnesses.

Answer normalization and token F1 follow the usual extractive-QA convention:
lowercase, strip punctuation, drop articles, collapse whitespace, then score
token multisets.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import re
import string
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, GraphMemError, ValidationError
from .indexer import CorpusRecord, IndexConfig, build_index
from .retriever import ExtractiveReader, RankedPassages, RetrievalConfig, Retriever
from .storage import GraphIndex

logger = logging.getLogger(__name__)

_ARTICLE_RE = re.compile(r"\b(a|an|the)\b")
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


@dataclass
class EvalQuery:
    id: str
    question: str
    answers: list[str] = field(default_factory=list)
    gold_passage_ids: list[str] = field(default_factory=list)


@dataclass
class EvalReport:
    per_query: list[dict]
    aggregates: dict[str, float]
    config_fingerprint: str
    evaluated: int
    skipped: list[str] = field(default_factory=list)
    failed: list[str] = field(default_factory=list)
    label: str = ""

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class ExpansionCurve:
    segment_count: int
    points: list[tuple[int, float]]
    metric_name: str = "recall_at_5"

    def to_dict(self) -> dict:
        return {"segment_count": self.segment_count, "metric_name": self.metric_name,
                "points": [list(p) for p in self.points]}


def read_queries_jsonl(path: str | Path) -> list[EvalQuery]:
    """One query per line: {"id", "question", "answers"?, "gold_passage_ids"?}."""
    queries = []
    try:
        handle = open(path, encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read queries file {path}: {exc}") from exc
    with handle:
        for line_no, line in enumerate(handle, 1):
            line = line.strip()
            if not line:
                continue
            raw = json.loads(line)
            if "question" not in raw:
                raise ValidationError(f"{path}:{line_no}: query needs a question")
            queries.append(EvalQuery(
                id=str(raw.get("id", line_no)),
                question=raw["question"],
                answers=[str(a) for a in raw.get("answers", [])],
                gold_passage_ids=[str(g) for g in raw.get("gold_passage_ids", [])],
            ))
    return queries


# -- metrics -----------------------------------------------------------------

def normalize_answer(text: str) -> str:
    text = text.lower()
    text = text.translate(_PUNCT_TABLE)
    text = _ARTICLE_RE.sub(" ", text)
    return " ".join(text.split())


def recall_at_k(retrieved: list[str], gold: set[str] | list[str], k: int) -> float:
    """Fraction of gold passages present in the topk of the retrieved list."""
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    gold = set(gold)
    if not gold:
        raise ValidationError("recall_at_k is undefined for an empty gold set")
    return len(set(retrieved[:k]) & gold) / len(gold)


def em_score(prediction: str, answers: list[str]) -> float:
    if not answers:
        raise ValidationError("em_score requires at least one gold answer")
    normalized = normalize_answer(prediction)
    return 1.0 if any(normalized == normalize_answer(a) for a in answers) else 0.0


def _token_f1(pred_tokens: list[str], gold_tokens: list[str]) -> float:
    if not pred_tokens and not gold_tokens:
        return 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0
    common = Counter(pred_tokens) & Counter(gold_tokens)
    overlap = sum(common.values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gold_tokens)
    return 2.0 * precision * recall / (precision + recall)


def f1_score(prediction: str, answers: list[str]) -> float:
    """Max over answers of the token-multiset F1 between normalized strings."""
    if not answers:
        raise ValidationError("f1_score requires at least one gold answer")
    pred_tokens = normalize_answer(prediction).split()
    return max(_token_f1(pred_tokens, normalize_answer(a).split()) for a in answers)


# -- harness helpers -----------------------------------------------------------

def _config_fingerprint(index: GraphIndex, config: RetrievalConfig) -> str:
    payload = json.dumps({"config": config.as_dict(),
                          "index": index.manifest.fingerprint}, sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def _write_jsonl(records: list[dict], path: str | Path | None) -> None:
    if path is None:
        return
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")


def _retrieved_doc_ids(index: GraphIndex, ranked: RankedPassages) -> list[str]:
    return [index.kg.passage(node_id).doc_id for node_id in ranked.passage_ids()]


# -- harnesses -------------------------------------------------------------------

def run_retrieval_eval(index: GraphIndex, queries: list[EvalQuery],
                       config: RetrievalConfig | None = None,
                       retriever: Retriever | None = None,
                       per_query_path: str | Path | None = None,
                       label: str = "") -> EvalReport:
    """Per-query recall@2/@5 plus aggregates; writes an optional JSONL sidecar.

    Queries with no gold annotation are skipped with a warning; queries whose
    gold passages are missing from the index are flagged as failed and
    excluded from the aggregates.
    """
    retriever = retriever or Retriever(index)
    config = config or retriever.config
    records: list[dict] = []
    skipped: list[str] = []
    failed: list[str] = []
    indexed_docs = {index.kg.passage(i).doc_id for i in index.kg.passage_ids()}
    k_needed = max(5, config.output_top_k)
    eval_config = dataclasses.replace(config, output_top_k=k_needed)

    for query in queries:
        if not query.gold_passage_ids:
            logger.warning("query %s has no gold passages; skipped", query.id)
            skipped.append(query.id)
            continue
        missing = [g for g in query.gold_passage_ids if g not in indexed_docs]
        if missing:
            logger.warning("query %s: gold passages %s not in index", query.id, missing)
            failed.append(query.id)
            records.append({"id": query.id, "question": query.question,
                            "error": f"missing gold passages: {missing}"})
            continue
        ranked = retriever.retrieve(query.question, eval_config)
        retrieved = _retrieved_doc_ids(index, ranked)
        gold = set(query.gold_passage_ids)
        records.append({
            "id": query.id,
            "question": query.question,
            "retrieved": retrieved,
            "gold": sorted(gold),
            "recall_at_2": recall_at_k(retrieved, gold, 2),
            "recall_at_5": recall_at_k(retrieved, gold, 5),
            "provenance": ranked.provenance,
        })

    scored = [r for r in records if "recall_at_5" in r]
    aggregates = {
        "recall_at_2": _mean(r["recall_at_2"] for r in scored) if scored else 0.0,
        "recall_at_5": _mean(r["recall_at_5"] for r in scored) if scored else 0.0,
    }
    _write_jsonl(records, per_query_path)
    return EvalReport(per_query=records, aggregates=aggregates,
                      config_fingerprint=_config_fingerprint(index, config),
                      evaluated=len(scored), skipped=skipped, failed=failed, label=label)


def run_qa_eval(index: GraphIndex, queries: list[EvalQuery], reader=None,
                config: RetrievalConfig | None = None,
                retriever: Retriever | None = None,
                per_query_path: str | Path | None = None,
                label: str = "") -> EvalReport:
    """Retrieve then answer per query; EM/F1 aggregates over answered queries."""
    if len(index.kg.passage_ids()) == 0:
        raise ValidationError("QA evaluation requires a non-empty passage corpus")
    retriever = retriever or Retriever(index)
    config = config or retriever.config
    reader = reader or ExtractiveReader()
    records: list[dict] = []
    skipped: list[str] = []
    failed: list[str] = []

    for query in queries:
        if not query.answers:
            logger.warning("query %s has no gold answers; skipped", query.id)
            skipped.append(query.id)
            continue
        ranked = retriever.retrieve(query.question, config)
        try:
            prediction = retriever.answer_question(query.question, ranked, reader)
        except GraphMemError as exc:
            logger.warning("reader failed on query %s: %s", query.id, exc)
            failed.append(query.id)
            records.append({"id": query.id, "question": query.question,
                            "error": str(exc)})
            continue
        records.append({
            "id": query.id,
            "question": query.question,
            "prediction": prediction,
            "answers": query.answers,
            "em": em_score(prediction, query.answers),
            "f1": f1_score(prediction, query.answers),
            "retrieved": _retrieved_doc_ids(index, ranked),
            "provenance": ranked.provenance,
        })

    scored = [r for r in records if "f1" in r]
    aggregates = {
        "em": _mean(r["em"] for r in scored) if scored else 0.0,
        "f1": _mean(r["f1"] for r in scored) if scored else 0.0,
    }
    _write_jsonl(records, per_query_path)
    return EvalReport(per_query=records, aggregates=aggregates,
                      config_fingerprint=_config_fingerprint(index, config),
                      evaluated=len(scored), skipped=skipped, failed=failed, label=label)


def run_expansion(corpus: list[CorpusRecord], queries: list[EvalQuery], segments: int,
                  index_config: IndexConfig | None = None,
                  retrieval_config: RetrievalConfig | None = None,
                  incremental: bool = False,
                  metric: str = "recall_at_5") -> ExpansionCurve:
    """Growing-corpus protocol: index segment 1, then grow segment by segment.

    The corpus is split into ``segments`` near-equal contiguous parts; every
    gold passage of every query must land in segment 1. Each step either
    re-indexes the concatenated prefix (default) or incrementally extends the
    previous index (``incremental=True``), then re-evaluates the same queries.
    """
    if segments < 2:
        raise ValidationError(f"segments must be >= 2, got {segments}")
    if len(corpus) < segments:
        raise ValidationError("corpus smaller than segment count")
    parts = _split_segments(corpus, segments)
    segment_one_docs = {record.doc_id for record in parts[0]}
    for query in queries:
        outside = [g for g in query.gold_passage_ids if g not in segment_one_docs]
        if outside:
            raise ConfigError(
                f"query {query.id}: gold passages {outside} are outside segment 1")

    points: list[tuple[int, float]] = []
    index: GraphIndex | None = None
    for step in range(1, segments + 1):
        if incremental and index is not None:
            index, _ = build_index(parts[step - 1], index_config, base=index)
        else:
            prefix = [record for part in parts[:step] for record in part]
            index, _ = build_index(prefix, index_config)
        report = run_retrieval_eval(index, queries, config=retrieval_config)
        points.append((step, report.aggregates[metric]))
    return ExpansionCurve(segment_count=segments, points=points, metric_name=metric)


def _split_segments(corpus: list[CorpusRecord], segments: int) -> list[list[CorpusRecord]]:
    base_size, remainder = divmod(len(corpus), segments)
    parts = []
    start = 0
    for i in range(segments):
        size = base_size + (1 if i < remainder else 0)
        parts.append(corpus[start:start + size])
        start += size
    return parts


_ABLATION_KEYS = {
    "link": ("triple", "node", "ner"),
    "filter": ("on", "off"),
    "passage_nodes": ("on", "off"),
}


def parse_ablation_mode(mode: str, base: RetrievalConfig) -> RetrievalConfig:
    """Mode strings look like "link=ner" or "filter=off,passage_nodes=off"."""
    overrides: dict = {}
    for part in mode.split(","):
        part = part.strip()
        if "=" not in part:
            raise ConfigError(f"bad ablation mode {mode!r}: expected key=value")
        key, value = part.split("=", 1)
        key, value = key.strip(), value.strip()
        if key not in _ABLATION_KEYS or value not in _ABLATION_KEYS[key]:
            raise ConfigError(f"unknown ablation mode {part!r}")
        if key == "link":
            overrides["link_mode"] = value
        elif key == "filter":
            overrides["filter_mode"] = base.filter_mode if value == "on" else "keep_all"
        elif key == "passage_nodes":
            overrides["passage_nodes"] = value == "on"
    return dataclasses.replace(base, **overrides)


def run_ablation(index: GraphIndex, queries: list[EvalQuery], modes: list[str],
                 base_config: RetrievalConfig | None = None,
                 retriever: Retriever | None = None) -> list[EvalReport]:
    """One retrieval EvalReport per requested mode, in request order."""
    retriever = retriever or Retriever(index)
    base = base_config or retriever.config
    reports = []
    for mode in modes:
        config = parse_ablation_mode(mode, base)
        reports.append(run_retrieval_eval(index, queries, config=config,
                                          retriever=retriever, label=mode))
    return reports


def segment_document(doc_id: str, title: str | None, text: str,
                     max_chars: int = 1200) -> list[CorpusRecord]:
    """Dataset-prep helper: split a long document into passage-sized chunks."""
    if max_chars < 1:
        raise ValidationError("max_chars must be >= 1")
    paragraphs = [p.strip() for p in text.split("\n") if p.strip()]
    chunks: list[str] = []
    current = ""
    for paragraph in paragraphs:
        if current and len(current) + len(paragraph) + 1 > max_chars:
            chunks.append(current)
            current = paragraph
        else:
            current = f"{current}\n{paragraph}" if current else paragraph
        while len(current) > max_chars:
            chunks.append(current[:max_chars])
            current = current[max_chars:]
    if current:
        chunks.append(current)
    return [CorpusRecord(doc_id=f"{doc_id}#{i}", title=title, text=chunk)
            for i, chunk in enumerate(chunks)]


def paired_bootstrap(metric_a: list[float], metric_b: list[float],
                     resamples: int = 2000, seed: int = 0) -> dict[str, float]:
    """Stretch utility: paired bootstrap over per-query metrics.

    Returns the observed mean difference (a - b) and the fraction of
    resamples where system a fails to beat system b.
    """
    if len(metric_a) != len(metric_b) or not metric_a:
        raise ValidationError("paired_bootstrap needs two equal-length non-empty lists")
    import numpy as np
    a = np.asarray(metric_a, dtype=np.float64)
    b = np.asarray(metric_b, dtype=np.float64)
    rng = np.random.default_rng(seed)
    n = len(a)
    diffs = a - b
    samples = rng.integers(0, n, size=(resamples, n))
    resampled = diffs[samples].mean(axis=1)
    return {
        "mean_diff": float(diffs.mean()),
        "p_not_better": float(np.mean(resampled <= 0.0)),
        "resamples": float(resamples),
    }


def _mean(values) -> float:
    values = list(values)
    return sum(values) / len(values)
