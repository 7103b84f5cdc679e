"""Online retrieval pipeline: link, filter, seed, walk, rank, with dense fallback."""

from __future__ import annotations

import dataclasses
import json
import logging
import re
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field

import numpy as np

from .embedding import top_k_similar
from .errors import ConfigError, DegenerateResetError, ProviderError, ValidationError
from .extraction import RuleBasedExtractor
from .linker import (DEFAULT_TRIPLE_TOP_K, FilterClientConfig, QueryLinker, ScoredTriple,
                     build_filter_client, filter_triples)
from .ppr import (DEFAULT_MAX_PHRASE_SEEDS, DEFAULT_PASSAGE_WEIGHT, PprParams,
                  build_reset_vector, run_ppr, seeds_to_reset_vector)
from .storage import GraphIndex

logger = logging.getLogger(__name__)

LINK_MODES = ("triple", "node", "ner")

PIPELINE = "pipeline"
DENSE_FALLBACK = "dense_fallback"

# split after terminal punctuation unless it trails a single capital (initials)
_SENTENCE_RE = re.compile(r"(?<=[a-z0-9][.!?])\s+|\n+")
_TOKEN_RE = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class RetrievalConfig:
    link_mode: str = "triple"                 # triple | node | ner
    triple_top_k: int = DEFAULT_TRIPLE_TOP_K
    filter_mode: str = "lexical"              # keep_all | keep_none | lexical | remote | off
    filter_fail_open: bool = True
    passage_weight_factor: float = DEFAULT_PASSAGE_WEIGHT
    max_phrase_seeds: int = DEFAULT_MAX_PHRASE_SEEDS
    ppr: PprParams = field(default_factory=PprParams)
    output_top_k: int = 5
    passage_nodes: bool = True

    def validate(self) -> None:
        if self.link_mode not in LINK_MODES:
            raise ConfigError(f"unknown link mode {self.link_mode!r}")
        if self.triple_top_k < 1 or self.output_top_k < 1:
            raise ConfigError("top-k values must be >= 1")
        self.ppr.validate()

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class RankedPassages:
    items: list[tuple[int, float]]            # (passage node id, score), non-increasing
    provenance: str                           # pipeline | dense_fallback
    diagnostics: dict = field(default_factory=dict)

    def passage_ids(self) -> list[int]:
        return [node_id for node_id, _score in self.items]


class ExtractiveReader:
    """Test oracle reader: answers with the context sentence that maximally
    overlaps the query (token-level F1), searched in rank order. Title marker
    lines are context, not candidate answer spans."""

    mode = "extractive_mock"

    def answer(self, query: str, context: str) -> str:
        sentences = [s.strip() for s in _SENTENCE_RE.split(context)
                     if s.strip() and not s.strip().startswith("Title:")]
        if not sentences:
            raise ValidationError("empty context")
        query_tokens = _TOKEN_RE.findall(query.casefold())
        best_score = -1.0
        best = sentences[0]
        for sentence in sentences:
            tokens = _TOKEN_RE.findall(sentence.casefold())
            if not tokens or not query_tokens:
                continue
            common = 0
            remaining = list(query_tokens)
            for token in tokens:
                if token in remaining:
                    remaining.remove(token)
                    common += 1
            score = 2.0 * common / (len(tokens) + len(query_tokens))
            if score > best_score:
                best_score = score
                best = sentence
        return best


class RemoteReader:
    """POST {"query": ..., "context": ...} -> {"answer": ...}."""

    mode = "remote"

    def __init__(self, endpoint: str, timeout: float = 60.0, max_retries: int = 2,
                 prompt_template_id: str = "default"):
        if not endpoint:
            raise ConfigError("remote reader requires an endpoint")
        self.endpoint = endpoint
        self.timeout = timeout
        self.max_retries = max(0, int(max_retries))
        self.prompt_template_id = prompt_template_id

    def answer(self, query: str, context: str) -> str:
        body = json.dumps({"query": query, "context": context}).encode("utf-8")
        request = urllib.request.Request(
            self.endpoint, data=body, headers={"Content-Type": "application/json"})
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            try:
                with urllib.request.urlopen(request, timeout=self.timeout) as response:
                    payload = json.loads(response.read().decode("utf-8"))
            except (urllib.error.URLError, TimeoutError, OSError, json.JSONDecodeError) as exc:
                last_error = exc
                logger.warning("reader attempt %d failed: %s", attempt, exc)
                continue
            answer = payload.get("answer")
            if not isinstance(answer, str) or not answer:
                raise ProviderError("reader returned no answer")
            return answer
        raise ProviderError(f"reader failed after {self.max_retries + 1} attempts: {last_error}")


@dataclass
class ReaderClientConfig:
    mode: str = "extractive_mock"  # extractive_mock | remote
    endpoint: str | None = None
    prompt_template_id: str = "default"


def build_reader(config: ReaderClientConfig):
    if config.mode == "extractive_mock":
        return ExtractiveReader()
    if config.mode == "remote":
        if not config.endpoint:
            raise ConfigError("remote reader mode requires an endpoint")
        return RemoteReader(config.endpoint, prompt_template_id=config.prompt_template_id)
    raise ConfigError(f"unknown reader mode {config.mode!r}")


def assemble_context(kg, ranked: RankedPassages) -> str:
    """Title + text blocks in rank order, blank-line separated."""
    blocks = []
    for node_id, _score in ranked.items:
        passage = kg.passage(node_id)
        if passage.title:
            blocks.append(f"Title: {passage.title}\n{passage.text}")
        else:
            blocks.append(passage.text)
    return "\n\n".join(blocks)


class Retriever:
    """Stateless query-time pipeline over a frozen index; safe to share."""

    def __init__(self, index: GraphIndex, embedder=None, extractor=None,
                 filter_client=None, config: RetrievalConfig | None = None):
        if embedder is None:
            from .embedding import embedder_from_fingerprint
            fingerprint = index.manifest.provider_fingerprints.get("embedding", "")
            embedder = embedder_from_fingerprint(fingerprint)
        self.index = index
        self.embedder = embedder
        self.extractor = extractor or RuleBasedExtractor()
        self._filter_client = filter_client
        self.config = config or RetrievalConfig(
            passage_weight_factor=index.manifest.passage_weight_factor,
            ppr=PprParams(damping=index.manifest.damping),
        )
        self.config.validate()
        self.linker = QueryLinker(index.kg, index.stores, embedder, self.extractor)

    def _filter_for(self, config: RetrievalConfig):
        if self._filter_client is not None:
            return self._filter_client
        return build_filter_client(FilterClientConfig(mode=config.filter_mode,
                                                      fail_open=config.filter_fail_open))

    # -- public operations ----------------------------------------------------

    def retrieve(self, query: str, config: RetrievalConfig | None = None) -> RankedPassages:
        config = config or self.config
        config.validate()
        timing: dict[str, float] = {}

        started = time.perf_counter()
        if config.link_mode == "triple":
            candidates = self.linker.link_query_to_triples(query, config.triple_top_k)
        else:
            candidates = []
        timing["link_ms"] = (time.perf_counter() - started) * 1000.0

        if config.link_mode == "triple":
            return self.retrieve_from_candidates(query, candidates, config, timing)

        # node/ner modes: phrase seeds come straight from the linker, no filter
        if config.link_mode == "node":
            seeds = self.linker.link_query_to_nodes(query, config.max_phrase_seeds)
        else:
            seeds = self.linker.link_ner_to_nodes(query)
        return self._pipeline_from_seeds(query, seeds, kept=[], dropped=[],
                                         filter_mode="none", config=config, timing=timing)

    def retrieve_from_candidates(self, query: str, candidates: list[ScoredTriple],
                                 config: RetrievalConfig | None = None,
                                 timing: dict | None = None) -> RankedPassages:
        """Pipeline tail from an explicit candidate triple list (filter onward)."""
        config = config or self.config
        timing = timing or {}
        if not candidates:
            return self._fallback(query, config, reason="no_candidate_triples", timing=timing)
        started = time.perf_counter()
        filtered = filter_triples(query, candidates, self.linker.triple_texts(candidates),
                                  self._filter_for(config), fail_open=config.filter_fail_open)
        timing["filter_ms"] = (time.perf_counter() - started) * 1000.0
        if not filtered.kept:
            return self._fallback(query, config, reason="empty_filtered_set", timing=timing,
                                  filter_mode=filtered.filter_mode,
                                  hallucinations=filtered.hallucination_count)
        return self._pipeline_from_filtered(query, filtered, config, timing)

    def dense_retrieve(self, query: str, k: int) -> RankedPassages:
        """Top-k passages by query-passage similarity."""
        if k < 1:
            raise ValidationError(f"k must be >= 1, got {k}")
        query_vec = self.embedder.embed_text(query, kind="query")
        hits = top_k_similar(query_vec, self.index.stores.passage, k)
        return RankedPassages(items=hits, provenance=DENSE_FALLBACK,
                              diagnostics={"kept_triples": [], "seed_phrases": [],
                                           "seed_passages": []})

    def answer_question(self, query: str, passages: RankedPassages, reader) -> str:
        if not passages.items:
            raise ValidationError("answer_question requires at least one passage")
        context = assemble_context(self.index.kg, passages)
        return reader.answer(query, context)

    # -- internals --------------------------------------------------------------

    def _passage_scores(self, query: str) -> dict[int, float]:
        store = self.index.stores.passage
        if len(store) == 0:
            return {}
        sims = store.scores(self.embedder.embed_text(query, kind="query"))
        return {int(i): float(s) for i, s in zip(store.ids, sims)}

    def _pipeline_from_filtered(self, query, filtered, config, timing) -> RankedPassages:
        passage_scores = self._passage_scores(query) if config.passage_nodes else {}
        try:
            reset = build_reset_vector(self.index.kg, filtered.kept, passage_scores,
                                       weight_factor=config.passage_weight_factor,
                                       max_phrase_seeds=config.max_phrase_seeds)
        except DegenerateResetError:
            return self._fallback(query, config, reason="degenerate_reset", timing=timing,
                                  filter_mode=filtered.filter_mode)
        if reset.phrase_seed_count == 0:
            return self._fallback(query, config, reason="no_phrase_seeds", timing=timing,
                                  filter_mode=filtered.filter_mode)
        return self._rank(query, reset, config, timing, extra={
            "kept_triples": [st.triple_id for st in filtered.kept],
            "dropped_triples": filtered.dropped,
            "filter_mode": filtered.filter_mode,
            "hallucinations": filtered.hallucination_count,
        })

    def _pipeline_from_seeds(self, query, seeds, kept, dropped, filter_mode,
                             config, timing) -> RankedPassages:
        if not seeds:
            return self._fallback(query, config, reason="no_linked_nodes", timing=timing)
        passage_scores = self._passage_scores(query) if config.passage_nodes else {}
        try:
            reset = seeds_to_reset_vector(seeds, passage_scores,
                                          weight_factor=config.passage_weight_factor,
                                          max_phrase_seeds=config.max_phrase_seeds)
        except DegenerateResetError:
            return self._fallback(query, config, reason="degenerate_reset", timing=timing)
        if reset.phrase_seed_count == 0:
            return self._fallback(query, config, reason="no_phrase_seeds", timing=timing)
        return self._rank(query, reset, config, timing, extra={
            "kept_triples": kept, "dropped_triples": dropped, "filter_mode": filter_mode,
        })

    def _rank(self, query, reset, config, timing, extra) -> RankedPassages:
        kg = self.index.kg
        started = time.perf_counter()
        scores = run_ppr(kg, reset, config.ppr)
        timing["ppr_ms"] = (time.perf_counter() - started) * 1000.0

        started = time.perf_counter()
        passage_ids = np.asarray(kg.passage_ids(), dtype=np.int64)
        if config.passage_nodes:
            passage_mass = scores.scores[passage_ids]
        else:
            # surrogate ranking used when passage nodes carry no reset mass:
            # a passage scores the summed walk mass of its context phrases
            passage_mass = np.array([
                sum(scores.of(phrase) for phrase in kg.context_phrases(int(pid)))
                for pid in passage_ids
            ])
        order = np.lexsort((passage_ids, -passage_mass))[: config.output_top_k]
        items = [(int(passage_ids[i]), float(passage_mass[i])) for i in order]
        timing["rank_ms"] = (time.perf_counter() - started) * 1000.0

        seed_phrases = sorted(reset.phrase_seed_ids)
        seed_passages = sorted(set(reset.entries) - set(reset.phrase_seed_ids))
        diagnostics = {
            "seed_phrases": seed_phrases,
            "seed_passages": seed_passages,
            "reset_support": len(reset.entries),
            "ppr_iterations": scores.iterations,
            "ppr_converged": scores.converged,
            "timing_ms": timing,
            **extra,
        }
        return RankedPassages(items=items, provenance=PIPELINE, diagnostics=diagnostics)

    def _fallback(self, query, config, reason, timing, filter_mode=None,
                  hallucinations=0) -> RankedPassages:
        ranked = self.dense_retrieve(query, config.output_top_k)
        ranked.diagnostics.update({
            "fallback_reason": reason,
            "timing_ms": timing,
            "hallucinations": hallucinations,
        })
        if filter_mode is not None:
            ranked.diagnostics["filter_mode"] = filter_mode
        return ranked
