"""Synthetic corpora for retrieval tests.

The two-hop suite builds chains person -> place -> county where the bridge
passage (place/county) shares no word with the query, so dense retrieval can
only ever find the first hop while graph search can reach the second. Each
chain also carries a confuser passage (person + hobby) and a small cluster of
junk passages whose triples serve as an injection pool for filter ablations.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from graphmem import CorpusRecord, EvalQuery

_LETTERS = "abcdefghijklmnopqrstuvwxyz"
_DISJOINT_LETTERS = "qvxzjkw"


def _word(rng: random.Random, seen: set[str], letters: str = _LETTERS,
          lo: int = 5, hi: int = 8) -> str:
    while True:
        word = "".join(rng.choice(letters) for _ in range(rng.randint(lo, hi)))
        if word not in seen:
            seen.add(word)
            return word


@dataclass
class TwoHopSuite:
    corpus: list[CorpusRecord]
    queries: list[EvalQuery]
    # per query id: triple fixtures (s, r, o) usable as filter-ablation injections
    junk_pool: dict[str, list[tuple[str, str, str]]] = field(default_factory=dict)


def two_hop_suite(n_chains: int = 50, n_generic: int = 150, seed: int = 20240811) -> TwoHopSuite:
    rng = random.Random(seed)
    seen: set[str] = set()
    corpus: list[CorpusRecord] = []
    queries: list[EvalQuery] = []
    junk_pool: dict[str, list[tuple[str, str, str]]] = {}

    for i in range(n_chains):
        person = f"{_word(rng, seen)} {_word(rng, seen)}"
        place = _word(rng, seen)
        county = _word(rng, seen)
        hobby = _word(rng, seen)
        person_t, place_t, county_t = person.title(), place.title(), county.title()

        corpus.append(CorpusRecord(
            doc_id=f"p1-{i}", title=person_t,
            text=f"{person_t} was born in {place_t}.",
            fixture_triples=[(person, "was born in", place)]))
        corpus.append(CorpusRecord(
            doc_id=f"p2-{i}", title=place_t,
            text=f"{place_t} lies within {county_t}.",
            fixture_triples=[(place, "lies within", county)]))
        corpus.append(CorpusRecord(
            doc_id=f"c-{i}", title=person_t,
            text=f"{person_t} enjoys {hobby}.",
            fixture_triples=[(person, "enjoys", hobby)]))

        junk = [_word(rng, seen) for _ in range(8)]
        j1a, j1b, j2a, j2b, j3, j4, j5, j6 = junk
        cluster = [
            (f"d1-{i}", j1a, j1b), (f"d2-{i}", j2a, j2b),
            (f"d3-{i}", j1a, j3), (f"d4-{i}", j1b, j4),
            (f"d5-{i}", j2a, j5), (f"d6-{i}", j2b, j6),
        ]
        for doc_id, subject, obj in cluster:
            corpus.append(CorpusRecord(
                doc_id=doc_id, title=subject.title(),
                text=f"{subject.title()} flumbers {obj}.",
                fixture_triples=[(subject, "flumbers", obj)]))

        query_id = f"q{i}"
        queries.append(EvalQuery(
            id=query_id,
            question=f"Where is the birthplace of {person_t}?",
            answers=[county_t],
            gold_passage_ids=[f"p1-{i}", f"p2-{i}"]))
        junk_pool[query_id] = [(j1a, "flumbers", j1b), (j2a, "flumbers", j2b),
                               (j1a, "flumbers", j3)]

    for k in range(n_generic):
        w1, w2 = _word(rng, seen), _word(rng, seen)
        corpus.append(CorpusRecord(
            doc_id=f"f-{k}", title=w1.title(),
            text=f"{w1.title()} collects {w2}.",
            fixture_triples=[(w1, "collects", w2)]))

    return TwoHopSuite(corpus=corpus, queries=queries, junk_pool=junk_pool)


def expansion_suite(n_queries: int = 12, segment_size: int = 30,
                    segments: int = 4, seed: int = 97) -> tuple[list[CorpusRecord], list[EvalQuery]]:
    """Segment 1 holds all gold passages; later segments are pure filler from a
    disjoint letter pool, so added segments can only distract."""
    if n_queries > segment_size:
        raise ValueError("segment 1 must fit the gold passages")
    rng = random.Random(seed)
    seen: set[str] = set()
    corpus: list[CorpusRecord] = []
    queries: list[EvalQuery] = []

    for i in range(n_queries):
        person = f"{_word(rng, seen)} {_word(rng, seen)}"
        place = _word(rng, seen)
        doc_id = f"gold-{i}"
        corpus.append(CorpusRecord(
            doc_id=doc_id, title=person.title(),
            text=f"{person.title()} was born in {place.title()}.",
            fixture_triples=[(person, "was born in", place)]))
        queries.append(EvalQuery(
            id=f"e{i}", question=f"Where was {person.title()} born?",
            answers=[place.title()], gold_passage_ids=[doc_id]))

    for k in range(segment_size - n_queries):
        w1, w2 = _word(rng, seen), _word(rng, seen)
        corpus.append(CorpusRecord(
            doc_id=f"seg1-fill-{k}", title=w1.title(),
            text=f"{w1.title()} collects {w2}.",
            fixture_triples=[(w1, "collects", w2)]))

    for seg in range(2, segments + 1):
        for k in range(segment_size):
            w1 = _word(rng, seen, _DISJOINT_LETTERS)
            w2 = _word(rng, seen, _DISJOINT_LETTERS)
            corpus.append(CorpusRecord(
                doc_id=f"seg{seg}-fill-{k}", title=w1.title(),
                text=f"{w1.title()} flumbers {w2}.",
                fixture_triples=[(w1, "flumbers", w2)]))

    return corpus, queries
