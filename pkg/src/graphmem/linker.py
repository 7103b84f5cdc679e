"""Online query linking and relevance filtering of candidate triples."""

from __future__ import annotations

import json
import logging
import re
import urllib.error
import urllib.request
from dataclasses import dataclass

from .embedding import top_k_similar
from .errors import ConfigError, ProviderError, ValidationError
from .extraction import RuleBasedExtractor

logger = logging.getLogger(__name__)

DEFAULT_TRIPLE_TOP_K = 5

_TOKEN_RE = re.compile(r"[a-z0-9]+")
_STOPWORDS = frozenset(
    "a an the is are was were be been being of in on at to for with and or "
    "what which where who whom whose when why how do does did".split()
)


def content_tokens(text: str) -> set[str]:
    """Normalized tokens minus a small closed stopword set."""
    return {t for t in _TOKEN_RE.findall(text.casefold()) if t not in _STOPWORDS}


@dataclass(frozen=True)
class ScoredTriple:
    triple_id: int
    score: float


@dataclass
class FilteredTripleSet:
    kept: list[ScoredTriple]
    dropped: list[int]
    filter_mode: str
    hallucination_count: int = 0
    failed_open: bool = False


class KeepAllFilter:
    mode = "keep_all"

    def keep_indices(self, query: str, triples: list[tuple[str, str, str]]) -> list[int]:
        return list(range(len(triples)))


class KeepNoneFilter:
    mode = "keep_none"

    def keep_indices(self, query: str, triples: list[tuple[str, str, str]]) -> list[int]:
        return []


class LexicalOverlapFilter:
    """Keeps triples sharing at least one content token with the query."""

    mode = "lexical"

    def keep_indices(self, query: str, triples: list[tuple[str, str, str]]) -> list[int]:
        query_tokens = content_tokens(query)
        kept = []
        for i, (s, r, o) in enumerate(triples):
            if content_tokens(f"{s} {r} {o}") & query_tokens:
                kept.append(i)
        return kept


class RemoteFilterClient:
    """POST {"query": ..., "triples": [[s, r, o], ...]} -> {"keep_indices": [...]}.

    Index-based so a hallucinated triple can never enter the kept set.
    """

    mode = "remote"

    def __init__(self, endpoint: str, timeout: float = 60.0, max_retries: int = 2,
                 temperature: float = 0.0, prompt_template_id: str = "default"):
        if not endpoint:
            raise ConfigError("remote filter requires an endpoint")
        self.endpoint = endpoint
        self.timeout = timeout
        self.max_retries = max(0, int(max_retries))
        self.temperature = temperature
        self.prompt_template_id = prompt_template_id

    def keep_indices(self, query: str, triples: list[tuple[str, str, str]]) -> list:
        body = json.dumps({"query": query, "triples": [list(t) for t in triples]}).encode("utf-8")
        request = urllib.request.Request(
            self.endpoint, data=body, headers={"Content-Type": "application/json"})
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            try:
                with urllib.request.urlopen(request, timeout=self.timeout) as response:
                    payload = json.loads(response.read().decode("utf-8"))
            except (urllib.error.URLError, TimeoutError, OSError, json.JSONDecodeError) as exc:
                last_error = exc
                logger.warning("filter attempt %d failed: %s", attempt, exc)
                continue
            indices = payload.get("keep_indices")
            if not isinstance(indices, list):
                raise ProviderError("filter response missing keep_indices")
            return indices
        raise ProviderError(f"filter failed after {self.max_retries + 1} attempts: {last_error}")


@dataclass
class FilterClientConfig:
    mode: str = "lexical"  # keep_all | keep_none | lexical | remote
    endpoint: str | None = None
    prompt_template_id: str = "default"
    temperature: float = 0.0
    fail_open: bool = True
    max_retries: int = 2
    timeout: float = 60.0


def build_filter_client(config: FilterClientConfig):
    if config.mode in ("keep_all", "mock_keep_all", "off"):
        return KeepAllFilter()
    if config.mode == "keep_none":
        return KeepNoneFilter()
    if config.mode in ("lexical", "mock_lexical"):
        return LexicalOverlapFilter()
    if config.mode == "remote":
        if not config.endpoint:
            raise ConfigError("remote filter mode requires an endpoint")
        return RemoteFilterClient(config.endpoint, timeout=config.timeout,
                                  max_retries=config.max_retries,
                                  temperature=config.temperature,
                                  prompt_template_id=config.prompt_template_id)
    raise ConfigError(f"unknown filter mode {config.mode!r}")


def filter_triples(query: str, candidates: list[ScoredTriple],
                   triple_texts: list[tuple[str, str, str]], client,
                   fail_open: bool = True) -> FilteredTripleSet:
    """Reduce candidates to a query-relevant subset; never re-ranks, never invents.

    Client responses are validated index-by-index: anything outside the
    candidate range counts as a hallucination and is discarded. On client
    failure the policy is fail-open (keep all) by default, fail-closed
    (keep none, which triggers the dense fallback downstream) otherwise.
    """
    if not candidates:
        raise ValidationError("filter_triples requires a non-empty candidate list")
    if len(candidates) != len(triple_texts):
        raise ValidationError("candidates and triple_texts must align")
    try:
        raw_indices = client.keep_indices(query, triple_texts)
    except ProviderError as exc:
        logger.warning("filter client failed (%s); applying %s policy",
                       exc, "fail-open" if fail_open else "fail-closed")
        kept = list(candidates) if fail_open else []
        dropped = [] if fail_open else [c.triple_id for c in candidates]
        return FilteredTripleSet(kept=kept, dropped=dropped, filter_mode=client.mode,
                                 failed_open=fail_open)
    hallucinations = 0
    valid: set[int] = set()
    for raw in raw_indices:
        if isinstance(raw, bool) or not isinstance(raw, int) or not 0 <= raw < len(candidates):
            hallucinations += 1
            continue
        valid.add(raw)
    kept = [candidates[i] for i in sorted(valid)]
    dropped = [candidates[i].triple_id for i in range(len(candidates)) if i not in valid]
    return FilteredTripleSet(kept=kept, dropped=dropped, filter_mode=client.mode,
                             hallucination_count=hallucinations)


class QueryLinker:
    """Links a query to the graph: whole query to triples (default), whole
    query to phrase nodes, or extracted entities to phrase nodes."""

    def __init__(self, kg, stores, embedder, extractor=None):
        self.kg = kg
        self.stores = stores
        self.embedder = embedder
        self.extractor = extractor or RuleBasedExtractor()

    def link_query_to_triples(self, query: str,
                              k: int = DEFAULT_TRIPLE_TOP_K) -> list[ScoredTriple]:
        if k < 1:
            raise ValidationError(f"k must be >= 1, got {k}")
        if len(self.stores.triple) == 0:
            return []
        query_vec = self.embedder.embed_text(query, kind="query")
        return [ScoredTriple(triple_id=i, score=s)
                for i, s in top_k_similar(query_vec, self.stores.triple, k)]

    def link_query_to_nodes(self, query: str, k: int = 5) -> list[tuple[int, float]]:
        if k < 1:
            raise ValidationError(f"k must be >= 1, got {k}")
        if len(self.stores.phrase) == 0:
            return []
        query_vec = self.embedder.embed_text(query, kind="query")
        return top_k_similar(query_vec, self.stores.phrase, k)

    def link_ner_to_nodes(self, query: str) -> list[tuple[int, float]]:
        entities = self.extractor.extract_query_entities(query)
        if not entities or len(self.stores.phrase) == 0:
            return []
        vectors = self.embedder.embed_texts(entities, kind="phrase")
        best: dict[int, float] = {}
        for vec in vectors:
            hits = top_k_similar(vec, self.stores.phrase, 1)
            if hits:
                node_id, score = hits[0]
                if node_id not in best or score > best[node_id]:
                    best[node_id] = score
        return sorted(best.items(), key=lambda item: (-item[1], item[0]))

    def triple_texts(self, candidates: list[ScoredTriple]) -> list[tuple[str, str, str]]:
        return [self.kg.triple_text(c.triple_id) for c in candidates]
