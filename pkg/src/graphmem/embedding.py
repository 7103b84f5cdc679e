"""Embedding providers, unit-norm vector stores, exact top-k search, synonym detection."""

from __future__ import annotations

import hashlib
import json
import logging
import re
import urllib.error
import urllib.request
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ProviderError, ValidationError

logger = logging.getLogger(__name__)

_HASH_PERSON = b"graphmem-v1"
_WORD_RE = re.compile(r"[a-z0-9]+")


def _feature_hash(feature: str) -> int:
    digest = hashlib.blake2b(feature.encode("utf-8"), digest_size=8,
                             person=_HASH_PERSON).digest()
    return int.from_bytes(digest, "little")


def _text_features(text: str) -> list[str]:
    """Word unigrams plus character 3-grams over the normalized text."""
    words = _WORD_RE.findall(text.casefold())
    if not words:
        # featureless input (e.g. punctuation only) still gets a stable vector
        return ["r:" + text]
    feats = ["w:" + w for w in words]
    padded = f" {' '.join(words)} "
    feats.extend("c:" + padded[i:i + 3] for i in range(len(padded) - 2))
    return feats


class HashingEmbedder:
    """Deterministic mock embedder: signed feature hashing, then L2 normalization.

    Similarity is graded by lexical overlap (shared words and 3-grams), which
    is what linking and synonym tests need from a hermetic provider. The hash
    seed is fixed, so the same input maps to the same vector on any platform.
    """

    name = "hash3gram-v1"

    def __init__(self, dim: int = 256):
        if dim < 8:
            raise ConfigError(f"embedding dim must be >= 8, got {dim}")
        self.dim = int(dim)

    @property
    def fingerprint(self) -> str:
        return f"{self.name}/dim={self.dim}"

    def embed_texts(self, texts: list[str], kind: str = "query") -> np.ndarray:
        if not texts:
            raise ValidationError("embed_texts requires a non-empty list")
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for row, text in zip(out, texts):
            for feature in _text_features(text):
                h = _feature_hash(feature)
                sign = 1.0 if h & 1 else -1.0
                row[(h >> 1) % self.dim] += sign
        norms = np.linalg.norm(out, axis=1)
        norms[norms == 0.0] = 1.0
        out /= norms[:, None]
        return out.astype(np.float32)

    def embed_text(self, text: str, kind: str = "query") -> np.ndarray:
        return self.embed_texts([text], kind)[0]


class RemoteEmbeddingClient:
    """JSON-over-HTTP provider: POST {"texts": [...]} -> {"embeddings": [[...]]}.

    Requests are batched; vectors are validated against the configured
    dimension and re-normalized so the unit-norm invariant holds regardless
    of the server.
    """

    name = "remote-json-v1"

    def __init__(self, endpoint: str, dim: int, batch_size: int = 64,
                 timeout: float = 30.0, max_retries: int = 2):
        if not endpoint:
            raise ConfigError("remote embedding provider requires an endpoint")
        self.endpoint = endpoint
        self.dim = int(dim)
        self.batch_size = max(1, int(batch_size))
        self.timeout = timeout
        self.max_retries = max(0, int(max_retries))

    @property
    def fingerprint(self) -> str:
        return f"{self.name}/dim={self.dim}"

    def embed_texts(self, texts: list[str], kind: str = "query") -> np.ndarray:
        if not texts:
            raise ValidationError("embed_texts requires a non-empty list")
        chunks = []
        for batch_index, start in enumerate(range(0, len(texts), self.batch_size)):
            batch = texts[start:start + self.batch_size]
            payload = self._post(batch, batch_index)
            vectors = payload.get("embeddings")
            if not isinstance(vectors, list) or len(vectors) != len(batch):
                raise ProviderError(
                    f"embedding batch {batch_index}: malformed response",
                    batch_index=batch_index)
            arr = np.asarray(vectors, dtype=np.float64)
            if arr.ndim != 2 or arr.shape[1] != self.dim:
                raise ConfigError(
                    f"provider returned dimension {arr.shape[-1] if arr.ndim else '?'};"
                    f" expected {self.dim}")
            norms = np.linalg.norm(arr, axis=1)
            if np.any(norms == 0.0):
                raise ProviderError(
                    f"embedding batch {batch_index}: zero vector in response",
                    batch_index=batch_index)
            chunks.append((arr / norms[:, None]).astype(np.float32))
        return np.vstack(chunks)

    def embed_text(self, text: str, kind: str = "query") -> np.ndarray:
        return self.embed_texts([text], kind)[0]

    def _post(self, batch: list[str], batch_index: int) -> dict:
        body = json.dumps({"texts": batch}).encode("utf-8")
        request = urllib.request.Request(
            self.endpoint, data=body, headers={"Content-Type": "application/json"})
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            try:
                with urllib.request.urlopen(request, timeout=self.timeout) as response:
                    return json.loads(response.read().decode("utf-8"))
            except (urllib.error.URLError, TimeoutError, json.JSONDecodeError, OSError) as exc:
                last_error = exc
                logger.warning("embedding batch %d attempt %d failed: %s",
                               batch_index, attempt, exc)
        raise ProviderError(
            f"embedding batch {batch_index} failed after {self.max_retries + 1} attempts:"
            f" {last_error}", batch_index=batch_index)


@dataclass
class EmbeddingProviderConfig:
    mode: str = "mock"  # mock | remote
    dim: int = 256
    endpoint: str | None = None
    batch_size: int = 64
    timeout: float = 30.0
    max_retries: int = 2


def build_embedder(config: EmbeddingProviderConfig):
    if config.mode == "mock":
        return HashingEmbedder(dim=config.dim)
    if config.mode == "remote":
        if not config.endpoint:
            raise ConfigError("remote embedding mode requires an endpoint")
        return RemoteEmbeddingClient(config.endpoint, config.dim, config.batch_size,
                                     config.timeout, config.max_retries)
    raise ConfigError(f"unknown embedding mode {config.mode!r}")


def embedder_from_fingerprint(fingerprint: str, endpoint: str | None = None):
    """Reconstruct the provider recorded in an index manifest."""
    name, _, rest = fingerprint.partition("/")
    params = dict(part.split("=", 1) for part in rest.split("/") if "=" in part)
    dim = int(params.get("dim", 0))
    if name == HashingEmbedder.name:
        return HashingEmbedder(dim=dim)
    if name == RemoteEmbeddingClient.name:
        if not endpoint:
            raise ConfigError("index was built with a remote embedder; endpoint required")
        return RemoteEmbeddingClient(endpoint, dim=dim)
    raise ConfigError(f"unknown embedding provider fingerprint {fingerprint!r}")


class VectorStore:
    """Immutable id-aligned matrix of unit-norm float32 vectors."""

    def __init__(self, kind: str, ids: list[int] | np.ndarray, matrix: np.ndarray):
        ids = np.asarray(ids, dtype=np.int64)
        matrix = np.asarray(matrix, dtype=np.float32)
        if matrix.ndim != 2 or len(ids) != matrix.shape[0]:
            raise ValidationError("ids and matrix rows must align")
        if len(set(ids.tolist())) != len(ids):
            raise ValidationError("duplicate ids in vector store")
        self.kind = kind
        self.ids = ids
        self.matrix = matrix
        self._row_of: dict[int, int] | None = None

    @classmethod
    def empty(cls, kind: str, dim: int) -> VectorStore:
        return cls(kind, np.empty(0, dtype=np.int64), np.empty((0, dim), dtype=np.float32))

    def __len__(self) -> int:
        return int(self.ids.shape[0])

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    def vector(self, item_id: int) -> np.ndarray:
        if self._row_of is None:
            self._row_of = {int(i): row for row, i in enumerate(self.ids)}
        try:
            return self.matrix[self._row_of[int(item_id)]]
        except KeyError:
            raise ValidationError(f"id {item_id} not in {self.kind} store") from None

    def scores(self, query_vec: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(query_vec, dtype=np.float32)


@dataclass
class VectorStores:
    phrase: VectorStore
    passage: VectorStore
    triple: VectorStore

    @property
    def dim(self) -> int:
        return self.phrase.dim


def top_k_similar(query_vec: np.ndarray, store: VectorStore, k: int) -> list[tuple[int, float]]:
    """Exact top-k by dot product (cosine for unit vectors); ties break by ascending id."""
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if len(store) == 0:
        return []
    scores = store.scores(query_vec)
    order = np.lexsort((store.ids, -scores))
    top = order[: min(k, len(store))]
    return [(int(store.ids[i]), float(scores[i])) for i in top]


def detect_synonyms(phrase_store: VectorStore, threshold: float,
                    batch_rows: int = 512) -> list[tuple[int, int, float]]:
    """All unordered id pairs with similarity >= threshold, each pair once.

    Brute-force pairwise scan, batched by rows to bound memory.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValidationError(f"threshold must be in (0, 1], got {threshold}")
    n = len(phrase_store)
    if n < 2:
        return []
    thr = np.float32(threshold)
    matrix = phrase_store.matrix
    ids = phrase_store.ids
    pairs: list[tuple[int, int, float]] = []
    for start in range(0, n, batch_rows):
        stop = min(start + batch_rows, n)
        block = matrix[start:stop] @ matrix.T
        for offset in range(stop - start):
            i = start + offset
            row = block[offset]
            hits = np.nonzero(row[i + 1:] >= thr)[0] + i + 1
            for j in hits:
                a, b = int(ids[i]), int(ids[j])
                if a > b:
                    a, b = b, a
                pairs.append((a, b, float(row[j])))
    pairs.sort(key=lambda p: (p[0], p[1]))
    return pairs
