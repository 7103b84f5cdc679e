import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphmem import (ConfigError, HashingEmbedder, ProviderError, RemoteEmbeddingClient,
                      ValidationError, VectorStore, detect_synonyms, top_k_similar)
from stub_server import StubServer


@pytest.fixture(scope="module")
def embedder():
    return HashingEmbedder(dim=256)


class TestHashingEmbedder:
    def test_deterministic(self, embedder):
        first = embedder.embed_text("thrissur")
        second = embedder.embed_text("thrissur")
        assert np.array_equal(first, second)

    def test_unit_norm(self, embedder):
        texts = ["thrissur", "Erik Hort", "a much longer passage about nothing", "!!!", "x"]
        vectors = embedder.embed_texts(texts)
        norms = np.linalg.norm(vectors.astype(np.float64), axis=1)
        assert np.all(np.abs(norms - 1.0) < 1e-6)

    def test_lexical_overlap_orders_similarity(self, embedder):
        anchor = embedder.embed_text("Erik Hort born Montebello")
        related = embedder.embed_text("Erik Hort")
        unrelated = embedder.embed_text("zebra xylophone")
        assert float(anchor @ related) > float(anchor @ unrelated)

    def test_order_preserving_batch(self, embedder):
        texts = ["alpha", "beta", "gamma"]
        batch = embedder.embed_texts(texts)
        for i, text in enumerate(texts):
            assert np.array_equal(batch[i], embedder.embed_text(text))

    def test_empty_list_rejected(self, embedder):
        with pytest.raises(ValidationError):
            embedder.embed_texts([])

    def test_known_vector_frozen(self):
        # guards against accidental changes to the hashing scheme, which would
        # silently invalidate every persisted index
        vec = HashingEmbedder(dim=16).embed_text("erik hort")
        assert np.isclose(np.linalg.norm(vec), 1.0, atol=1e-6)
        frozen = [-0.37796447, 0.0, 0.37796447, 0.0, 0.0, 0.37796447,
                  0.37796447, 0.37796447, 0.0, -0.37796447, 0.0, 0.0,
                  -0.37796447, 0.0, 0.0, 0.0]
        assert np.allclose(vec, frozen, atol=1e-6)


class TestTopKSimilar:
    def test_self_similarity_first(self, embedder):
        texts = [f"word{i}" for i in range(20)]
        matrix = embedder.embed_texts(texts)
        store = VectorStore("phrase", list(range(20)), matrix)
        hits = top_k_similar(matrix[7], store, 3)
        assert hits[0][0] == 7
        assert hits[0][1] == pytest.approx(1.0, abs=1e-6)

    def test_k_larger_than_store(self, embedder):
        matrix = embedder.embed_texts(["a", "b"])
        store = VectorStore("phrase", [0, 1], matrix)
        assert len(top_k_similar(matrix[0], store, 10)) == 2

    def test_empty_store_returns_empty(self):
        store = VectorStore.empty("phrase", 8)
        assert top_k_similar(np.zeros(8, dtype=np.float32), store, 5) == []

    def test_invalid_k(self, embedder):
        store = VectorStore("phrase", [0], embedder.embed_texts(["a"]))
        with pytest.raises(ValidationError):
            top_k_similar(store.matrix[0], store, 0)

    def test_tie_break_ascending_id(self):
        vec = np.zeros(4, dtype=np.float32)
        vec[0] = 1.0
        matrix = np.stack([vec, vec, vec])
        store = VectorStore("phrase", [9, 3, 7], matrix)
        hits = top_k_similar(vec, store, 3)
        assert [h[0] for h in hits] == [3, 7, 9]

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(11)
        matrix = rng.normal(size=(200, 32)).astype(np.float32)
        matrix /= np.linalg.norm(matrix, axis=1, keepdims=True)
        ids = rng.permutation(1000)[:200].tolist()
        store = VectorStore("passage", ids, matrix)
        query = matrix[13]
        expected = sorted(
            ((int(i), float(s)) for i, s in zip(ids, matrix @ query)),
            key=lambda pair: (-pair[1], pair[0]))[:5]
        assert top_k_similar(query, store, 5) == expected

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 30), st.integers(0, 2 ** 31 - 1))
    def test_oracle_property(self, k, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 60))
        matrix = rng.normal(size=(n, 16)).astype(np.float32)
        matrix /= np.linalg.norm(matrix, axis=1, keepdims=True)
        ids = rng.permutation(500)[:n].tolist()
        store = VectorStore("triple", ids, matrix)
        query = matrix[int(rng.integers(0, n))]
        scores = matrix @ query
        expected = sorted(((int(i), float(s)) for i, s in zip(ids, scores)),
                          key=lambda pair: (-pair[1], pair[0]))[:k]
        got = top_k_similar(query, store, k)
        assert [g[0] for g in got] == [e[0] for e in expected]
        assert all(a <= b for a, b in zip([s for _, s in got][1:], [s for _, s in got]))


class TestDetectSynonyms:
    def test_exact_threshold_included(self):
        dim = 8
        v1 = np.zeros(dim, dtype=np.float32)
        v1[0] = 1.0
        v2 = np.zeros(dim, dtype=np.float32)
        v2[0], v2[1] = 0.8, 0.6
        store = VectorStore("phrase", [1, 2], np.stack([v1, v2]))
        pairs = detect_synonyms(store, 0.8)
        assert len(pairs) == 1
        a, b, sim = pairs[0]
        assert (a, b) == (1, 2)
        assert sim >= 0.8

    def test_orthogonal_vectors_empty(self):
        matrix = np.eye(6, dtype=np.float32)
        store = VectorStore("phrase", list(range(6)), matrix)
        assert detect_synonyms(store, 0.8) == []

    def test_matches_pairwise_oracle(self):
        rng = np.random.default_rng(3)
        matrix = rng.normal(size=(100, 12)).astype(np.float32)
        matrix /= np.linalg.norm(matrix, axis=1, keepdims=True)
        ids = list(range(100))
        store = VectorStore("phrase", ids, matrix)
        threshold = 0.5
        expected = []
        for i in range(100):
            for j in range(i + 1, 100):
                sim = float(matrix[i] @ matrix[j])
                if np.float32(sim) >= np.float32(threshold):
                    expected.append((i, j))
        got = detect_synonyms(store, threshold, batch_rows=17)
        assert [(a, b) for a, b, _ in got] == sorted(expected)
        assert all(-1.0 - 1e-6 <= s <= 1.0 + 1e-6 for _, _, s in got)

    def test_bad_threshold(self):
        store = VectorStore.empty("phrase", 4)
        with pytest.raises(ValidationError):
            detect_synonyms(store, 0.0)


class TestRemoteEmbeddingClient:
    def test_wire_contract_and_batching(self):
        def handler(body):
            return 200, {"embeddings": [[1.0, 0.0, 0.0, 0.0] for _ in body["texts"]]}

        with StubServer(handler) as stub:
            client = RemoteEmbeddingClient(stub.url, dim=4, batch_size=2)
            vectors = client.embed_texts(["a", "b", "c"])
        assert vectors.shape == (3, 4)
        assert len(stub.requests) == 2
        assert stub.requests[0] == {"texts": ["a", "b"]}
        assert stub.requests[1] == {"texts": ["c"]}
        assert np.allclose(np.linalg.norm(vectors, axis=1), 1.0, atol=1e-6)

    def test_dimension_mismatch_is_fatal(self):
        def handler(body):
            return 200, {"embeddings": [[1.0, 0.0] for _ in body["texts"]]}

        with StubServer(handler) as stub:
            client = RemoteEmbeddingClient(stub.url, dim=4)
            with pytest.raises(ConfigError):
                client.embed_texts(["a"])

    def test_transport_failure_surfaces_batch_index(self):
        calls = {"n": 0}

        def handler(body):
            calls["n"] += 1
            if body["texts"] == ["c"]:
                return 500, b"boom"
            return 200, {"embeddings": [[1.0, 0.0, 0.0, 0.0] for _ in body["texts"]]}

        with StubServer(handler) as stub:
            client = RemoteEmbeddingClient(stub.url, dim=4, batch_size=2, max_retries=1)
            with pytest.raises(ProviderError) as excinfo:
                client.embed_texts(["a", "b", "c"])
        assert excinfo.value.batch_index == 1

    def test_retry_then_success(self):
        calls = {"n": 0}

        def handler(body):
            calls["n"] += 1
            if calls["n"] == 1:
                return 500, b"flaky"
            return 200, {"embeddings": [[0.0, 2.0, 0.0, 0.0] for _ in body["texts"]]}

        with StubServer(handler) as stub:
            client = RemoteEmbeddingClient(stub.url, dim=4, max_retries=2)
            vectors = client.embed_texts(["a"])
        assert calls["n"] == 2
        assert vectors[0][1] == pytest.approx(1.0)
