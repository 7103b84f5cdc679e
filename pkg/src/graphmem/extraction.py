"""Triple and entity extraction clients: a deterministic rule-based mock and a remote JSON client."""

from __future__ import annotations

import json
import logging
import re
import urllib.error
import urllib.request
from dataclasses import dataclass

from .errors import ConfigError, ProviderError

logger = logging.getLogger(__name__)

# split after terminal punctuation unless it trails a single capital (initials)
_SENTENCE_RE = re.compile(r"(?<=[a-z0-9][.!?])\s+|\n+")
_ALNUM_RE = re.compile(r"[a-z0-9]+")
_EDGE_PUNCT = " \t.,;:!?\"'()[]"

# Words that start questions; capitalized runs made of these are not entities.
_QUESTION_WORDS = frozenset(
    "what which where who whom whose when why how is are was were did does do "
    "in on at of the a an".split()
)

# Closed verb list for the rule-based mock, longest phrases first.
_VERB_PHRASES: list[tuple[str, ...]] = sorted(
    [
        ("was", "born", "in"),
        ("is", "located", "in"),
        ("is", "the", "capital", "of"),
        ("is", "a", "city", "in"),
        ("was", "mayor", "of"),
        ("is", "part", "of"),
        ("lies", "within"),
        ("works", "at"),
        ("belongs", "to"),
        ("wrote",),
        ("founded",),
        ("directed",),
        ("from",),
        ("is",),
        ("was",),
        ("are",),
        ("were",),
    ],
    key=len,
    reverse=True,
)


@dataclass
class ExtractionResult:
    entities: list[str]
    triples: list[tuple[str, str, str]]


def _norm_token(token: str) -> str:
    return "".join(_ALNUM_RE.findall(token.casefold()))


def _capitalized_runs(tokens: list[str]) -> list[str]:
    runs: list[list[str]] = []
    current: list[str] = []
    for token in tokens:
        if token[:1].isupper():
            current.append(token)
        elif current:
            runs.append(current)
            current = []
    if current:
        runs.append(current)
    entities = []
    for run in runs:
        while run and _norm_token(run[0]) in _QUESTION_WORDS:
            run = run[1:]
        if run:
            entity = " ".join(run).strip(_EDGE_PUNCT)
            if entity:
                entities.append(entity)
    return entities


class RuleBasedExtractor:
    """Hermetic mock: one triple per sentence via a closed verb-phrase list."""

    name = "rule-v1"

    @property
    def fingerprint(self) -> str:
        return self.name

    def extract(self, text: str) -> ExtractionResult:
        triples: list[tuple[str, str, str]] = []
        entities: list[str] = []
        seen_entities: set[str] = set()
        for sentence in _SENTENCE_RE.split(text):
            tokens = sentence.split()
            if not tokens:
                continue
            for entity in _capitalized_runs(tokens):
                key = entity.casefold()
                if key not in seen_entities:
                    seen_entities.add(key)
                    entities.append(entity)
            triple = self._sentence_triple(tokens)
            if triple is not None:
                triples.append(triple)
        return ExtractionResult(entities=entities, triples=triples)

    def extract_query_entities(self, query: str) -> list[str]:
        return self.extract(query).entities

    def _sentence_triple(self, tokens: list[str]) -> tuple[str, str, str] | None:
        norm = [_norm_token(t) for t in tokens]
        for i in range(len(tokens)):
            for verb in _VERB_PHRASES:
                j = i + len(verb)
                if j >= len(tokens):
                    continue
                if tuple(norm[i:j]) != verb:
                    continue
                subject = " ".join(tokens[:i]).strip(_EDGE_PUNCT)
                obj = " ".join(tokens[j:]).strip(_EDGE_PUNCT)
                if _norm_token(subject) and _norm_token(obj):
                    return (subject, " ".join(verb), obj)
        return None


class RemoteExtractionClient:
    """POST {"passage": text} -> {"entities": [...], "triples": [[s, r, o], ...]}."""

    name = "remote-extract-v1"

    def __init__(self, endpoint: str, timeout: float = 60.0, max_retries: int = 2,
                 temperature: float = 0.0, prompt_template_id: str = "default"):
        if not endpoint:
            raise ConfigError("remote extraction requires an endpoint")
        self.endpoint = endpoint
        self.timeout = timeout
        self.max_retries = max(0, int(max_retries))
        self.temperature = temperature
        self.prompt_template_id = prompt_template_id

    @property
    def fingerprint(self) -> str:
        return f"{self.name}/template={self.prompt_template_id}/temp={self.temperature}"

    def extract(self, text: str) -> ExtractionResult:
        payload = self._post({"passage": text})
        entities = payload.get("entities", [])
        triples = payload.get("triples")
        if not isinstance(triples, list) or not isinstance(entities, list):
            raise ProviderError("malformed extraction response")
        parsed: list[tuple[str, str, str]] = []
        for item in triples:
            if not (isinstance(item, (list, tuple)) and len(item) == 3
                    and all(isinstance(part, str) for part in item)):
                raise ProviderError(f"malformed triple in extraction response: {item!r}")
            parsed.append((item[0], item[1], item[2]))
        return ExtractionResult(entities=[str(e) for e in entities], triples=parsed)

    def extract_query_entities(self, query: str) -> list[str]:
        return self.extract(query).entities

    def _post(self, body: dict) -> dict:
        data = json.dumps(body).encode("utf-8")
        request = urllib.request.Request(
            self.endpoint, data=data, headers={"Content-Type": "application/json"})
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            try:
                with urllib.request.urlopen(request, timeout=self.timeout) as response:
                    raw = response.read().decode("utf-8")
            except (urllib.error.URLError, TimeoutError, OSError) as exc:
                last_error = exc
                logger.warning("extraction attempt %d failed: %s", attempt, exc)
                continue
            try:
                return json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ProviderError(f"extraction response is not JSON: {exc}") from exc
        raise ProviderError(f"extraction failed after {self.max_retries + 1} attempts: {last_error}")


@dataclass
class ExtractionClientConfig:
    mode: str = "mock"  # mock | remote
    endpoint: str | None = None
    prompt_template_id: str = "default"
    temperature: float = 0.0
    max_retries: int = 2
    timeout: float = 60.0


def build_extractor(config: ExtractionClientConfig):
    if config.mode == "mock":
        return RuleBasedExtractor()
    if config.mode == "remote":
        if not config.endpoint:
            raise ConfigError("remote extraction mode requires an endpoint")
        return RemoteExtractionClient(
            config.endpoint, timeout=config.timeout, max_retries=config.max_retries,
            temperature=config.temperature, prompt_template_id=config.prompt_template_id)
    raise ConfigError(f"unknown extraction mode {config.mode!r}")
