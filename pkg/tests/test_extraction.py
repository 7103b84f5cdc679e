import pytest

from graphmem import ExtractionClientConfig, ProviderError, RuleBasedExtractor, build_extractor
from graphmem.extraction import RemoteExtractionClient
from stub_server import StubServer


class TestRuleBasedExtractor:
    def test_verb_pattern(self):
        result = RuleBasedExtractor().extract("Montebello is part of Rockland County.")
        assert result.triples == [("Montebello", "is part of", "Rockland County")]

    def test_one_triple_per_sentence(self):
        text = "Erik Hort was born in Montebello. Montebello lies within Rockland."
        result = RuleBasedExtractor().extract(text)
        assert len(result.triples) == 2
        assert result.triples[0][1] == "was born in"
        assert result.triples[1][1] == "lies within"

    def test_no_verb_no_triple(self):
        result = RuleBasedExtractor().extract("Purple monkeys dishwasher.")
        assert result.triples == []

    def test_entities_are_capitalized_runs(self):
        result = RuleBasedExtractor().extract("Erik Hort moved near Lake Placid today.")
        assert "Erik Hort" in result.entities
        assert "Lake Placid" in result.entities

    def test_query_entities_skip_question_words(self):
        extractor = RuleBasedExtractor()
        assert extractor.extract_query_entities(
            "In what city was I.P. Paul born?") == ["I.P. Paul"]
        assert extractor.extract_query_entities("what city is the capital?") == []

    def test_deterministic(self):
        text = "Erik Hort was born in Montebello."
        first = RuleBasedExtractor().extract(text)
        second = RuleBasedExtractor().extract(text)
        assert first.triples == second.triples
        assert first.entities == second.entities


class TestRemoteExtractionClient:
    def test_wire_contract(self):
        def handler(body):
            assert set(body) == {"passage"}
            return 200, {"entities": ["Erik Hort"],
                         "triples": [["Erik Hort", "born in", "Montebello"]]}

        with StubServer(handler) as stub:
            client = RemoteExtractionClient(stub.url)
            result = client.extract("Erik Hort was born in Montebello.")
        assert result.triples == [("Erik Hort", "born in", "Montebello")]
        assert result.entities == ["Erik Hort"]
        assert stub.requests[0]["passage"] == "Erik Hort was born in Montebello."

    def test_invalid_json_raises_provider_error(self):
        with StubServer(lambda body: (200, b"not json at all")) as stub:
            client = RemoteExtractionClient(stub.url, max_retries=0)
            with pytest.raises(ProviderError):
                client.extract("text")

    def test_malformed_triples_raise(self):
        with StubServer(lambda body: (200, {"entities": [], "triples": [["just_two", "x"]]})) as stub:
            client = RemoteExtractionClient(stub.url, max_retries=0)
            with pytest.raises(ProviderError):
                client.extract("text")


def test_build_extractor_modes():
    assert isinstance(build_extractor(ExtractionClientConfig()), RuleBasedExtractor)
    remote = build_extractor(ExtractionClientConfig(mode="remote", endpoint="http://x/"))
    assert isinstance(remote, RemoteExtractionClient)
    assert remote.temperature == 0.0
