"""Graph-memory passage retrieval.

Index a passage corpus into an open knowledge graph (phrase and passage nodes
joined by relation, synonym, and context edges), then answer queries by
linking them to triples, filtering the candidates, seeding a personalized
PageRank walk, and ranking passages by their walk mass.
"""

from .embedding import (EmbeddingProviderConfig, HashingEmbedder, RemoteEmbeddingClient,
                        VectorStore, VectorStores, build_embedder, detect_synonyms,
                        top_k_similar)
from .errors import (ConfigError, ConflictError, DegenerateResetError, FrozenIndexError,
                     GraphMemError, IndexFormatError, NotFoundError, ProviderError,
                     ValidationError)
from .evaluation import (EvalQuery, EvalReport, ExpansionCurve, em_score, f1_score,
                         normalize_answer, read_queries_jsonl, recall_at_k,
                         run_ablation, run_expansion, run_qa_eval, run_retrieval_eval)
from .extraction import (ExtractionClientConfig, ExtractionResult, RemoteExtractionClient,
                         RuleBasedExtractor, build_extractor)
from .indexer import (CorpusRecord, IndexConfig, IndexReport, build_index,
                      extract_triples, read_corpus_jsonl)
from .kg import (CONTEXT, RELATION, SYNONYM, GraphStats, OpenKG, PassageNode, PhraseNode,
                 Triple, normalize_phrase)
from .linker import (FilterClientConfig, FilteredTripleSet, KeepAllFilter, KeepNoneFilter,
                     LexicalOverlapFilter, QueryLinker, RemoteFilterClient, ScoredTriple,
                     build_filter_client, filter_triples)
from .ppr import (PprParams, PprScores, ResetVector, build_reset_vector, dense_ppr_oracle,
                  run_ppr, seeds_to_reset_vector)
from .retriever import (ExtractiveReader, RankedPassages, ReaderClientConfig, RemoteReader,
                        RetrievalConfig, Retriever, build_reader)
from .service import ServiceConfig, make_server, serve
from .storage import FORMAT_VERSION, GraphIndex, IndexManifest, load_index, save_index

__version__ = "0.1.0"

__all__ = [
    "CONTEXT", "RELATION", "SYNONYM", "FORMAT_VERSION",
    "ConfigError", "ConflictError", "CorpusRecord", "DegenerateResetError",
    "EmbeddingProviderConfig", "EvalQuery", "EvalReport", "ExpansionCurve",
    "ExtractionClientConfig", "ExtractionResult", "ExtractiveReader",
    "FilterClientConfig", "FilteredTripleSet", "FrozenIndexError", "GraphIndex",
    "GraphMemError", "GraphStats", "HashingEmbedder", "IndexConfig", "IndexFormatError",
    "IndexManifest", "IndexReport", "KeepAllFilter", "KeepNoneFilter",
    "LexicalOverlapFilter", "NotFoundError", "OpenKG", "PassageNode", "PhraseNode",
    "PprParams", "PprScores", "ProviderError", "QueryLinker", "RankedPassages",
    "ReaderClientConfig", "RemoteEmbeddingClient", "RemoteExtractionClient",
    "RemoteFilterClient", "RemoteReader", "ResetVector", "RetrievalConfig", "Retriever",
    "RuleBasedExtractor", "ScoredTriple", "ServiceConfig", "Triple", "ValidationError",
    "VectorStore", "VectorStores",
    "build_embedder", "build_extractor", "build_filter_client", "build_index",
    "build_reader", "build_reset_vector", "dense_ppr_oracle", "detect_synonyms",
    "em_score", "extract_triples", "f1_score", "filter_triples", "load_index",
    "make_server", "normalize_answer", "normalize_phrase", "read_corpus_jsonl",
    "read_queries_jsonl", "recall_at_k", "run_ablation", "run_expansion", "run_ppr",
    "run_qa_eval", "run_retrieval_eval", "save_index", "seeds_to_reset_vector", "serve",
    "top_k_similar",
]
