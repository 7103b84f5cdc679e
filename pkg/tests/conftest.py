import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from graphmem import CorpusRecord, build_index


def toy_corpus() -> list[CorpusRecord]:
    return [
        CorpusRecord(
            "ipp", "I. P. Paul",
            "I. P. Paul is a politician from Thrissur. "
            "I. P. Paul was mayor of Thrissur municipal corporation.",
            fixture_triples=[("I. P. Paul", "from", "Thrissur"),
                             ("I. P. Paul", "was mayor of",
                              "Thrissur municipal corporation")]),
        CorpusRecord(
            "thr", "Thrissur", "Thrissur is a city in Kerala, known for festivals.",
            fixture_triples=[("Thrissur", "is a city in", "Kerala")]),
        CorpusRecord(
            "yin", "Yinka Ayefele",
            "Yinka Ayefele is a musician who started early in life.",
            fixture_triples=[("Yinka Ayefele", "is", "musician")]),
        CorpusRecord(
            "par", "Paul Parker", "Paul Parker is a singer from California.",
            fixture_triples=[("Paul Parker", "is", "singer"),
                             ("Paul Parker", "from", "California")]),
        CorpusRecord(
            "erk", "Erik Hort", "Erik Hort was born in Montebello in New York.",
            fixture_triples=[("Erik Hort", "born in", "Montebello"),
                             ("Erik Hort", "born in", "New York")]),
        CorpusRecord(
            "mtb", "Montebello", "Montebello is part of Rockland County.",
            fixture_triples=[("Montebello", "is part of", "Rockland County")]),
    ]


@pytest.fixture(scope="session")
def toy_index():
    index, report = build_index(toy_corpus())
    return index


@pytest.fixture(scope="session")
def toy_report():
    index, report = build_index(toy_corpus())
    return report
