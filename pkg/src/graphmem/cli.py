"""Command-line interface: index, retrieve, stats, verify, eval, serve."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import evaluation, plots
from .embedding import EmbeddingProviderConfig
from .errors import GraphMemError, ValidationError
from .extraction import ExtractionClientConfig
from .indexer import IndexConfig, build_index, read_corpus_jsonl
from .linker import FilterClientConfig, build_filter_client
from .ppr import PprParams, ResetVector, dense_ppr_oracle, run_ppr
from .retriever import ReaderClientConfig, RetrievalConfig, Retriever, build_reader
from .service import ServiceConfig, response_payload, serve
from .storage import load_index, save_index

logger = logging.getLogger(__name__)

ENV_EMBED_ENDPOINT = "GRAPHMEM_EMBED_ENDPOINT"
ENV_EXTRACT_ENDPOINT = "GRAPHMEM_EXTRACT_ENDPOINT"
ENV_FILTER_ENDPOINT = "GRAPHMEM_FILTER_ENDPOINT"
ENV_READER_ENDPOINT = "GRAPHMEM_READER_ENDPOINT"


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError("config file must hold a JSON object")
    return data


def _setting(args: argparse.Namespace, file_config: dict, key: str, default):
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in file_config:
        return file_config[key]
    return default


def _index_config(args, file_config: dict) -> IndexConfig:
    embedding_mode = _setting(args, file_config, "embedding_mode", "mock")
    extraction_mode = _setting(args, file_config, "extraction_mode", "mock")
    return IndexConfig(
        embedding=EmbeddingProviderConfig(
            mode=embedding_mode,
            dim=int(_setting(args, file_config, "dim", 256)),
            endpoint=_setting(args, file_config, "embedding_endpoint",
                              os.environ.get(ENV_EMBED_ENDPOINT)),
        ),
        extraction=ExtractionClientConfig(
            mode=extraction_mode,
            endpoint=_setting(args, file_config, "extraction_endpoint",
                              os.environ.get(ENV_EXTRACT_ENDPOINT)),
            temperature=float(_setting(args, file_config, "temperature", 0.0)),
        ),
        synonym_threshold=float(_setting(args, file_config, "synonym_threshold", 0.8)),
        damping=float(_setting(args, file_config, "damping", 0.5)),
        passage_weight_factor=float(_setting(args, file_config, "passage_weight", 0.05)),
    )


def _retrieval_config(args, file_config: dict, manifest) -> RetrievalConfig:
    return RetrievalConfig(
        link_mode=_setting(args, file_config, "link_mode", "triple"),
        triple_top_k=int(_setting(args, file_config, "triple_top_k", 5)),
        filter_mode=_setting(args, file_config, "filter_mode", "lexical"),
        passage_weight_factor=float(_setting(args, file_config, "passage_weight",
                                             manifest.passage_weight_factor)),
        ppr=PprParams(
            damping=float(_setting(args, file_config, "damping", manifest.damping)),
            tolerance=float(_setting(args, file_config, "ppr_tol", 1e-8)),
            max_iterations=int(_setting(args, file_config, "ppr_max_iter", 1000)),
        ),
        output_top_k=int(_setting(args, file_config, "top_k", 5)),
    )


def _make_retriever(index, config: RetrievalConfig, file_config: dict) -> Retriever:
    filter_client = None
    if config.filter_mode == "remote":
        endpoint = file_config.get("filter_endpoint", os.environ.get(ENV_FILTER_ENDPOINT))
        filter_client = build_filter_client(FilterClientConfig(mode="remote",
                                                               endpoint=endpoint))
    return Retriever(index, filter_client=filter_client, config=config)


# -- commands -----------------------------------------------------------------

def cmd_index(args) -> int:
    file_config = _load_config_file(args.config)
    corpus = read_corpus_jsonl(args.corpus)
    config = _index_config(args, file_config)
    index, report = build_index(corpus, config)
    save_index(index, args.out)
    payload = {"out": str(args.out), **report.as_dict()}
    if args.json:
        print(json.dumps(payload, indent=2))
    else:
        stats = report.stats
        print(f"indexed {stats.passage_nodes} passages -> {args.out}")
        print(f"  phrase nodes    {stats.phrase_nodes}")
        print(f"  relation edges  {stats.relation_edges}")
        print(f"  synonym edges   {stats.synonym_edges}")
        print(f"  context edges   {stats.context_edges}")
        print(f"  failures        {report.extraction_failures}")
        print(f"  wall time       {report.wall_time_s:.2f}s")
    return 0


def cmd_retrieve(args) -> int:
    file_config = _load_config_file(args.config)
    index = load_index(args.index)
    config = _retrieval_config(args, file_config, index.manifest)
    retriever = _make_retriever(index, config, file_config)
    started = time.perf_counter()
    ranked = retriever.retrieve(args.query, config)
    elapsed_ms = (time.perf_counter() - started) * 1000.0
    payload = response_payload(index, ranked, elapsed_ms)
    if args.json:
        print(json.dumps(payload, indent=2))
    else:
        print(f"[{ranked.provenance}] top {len(ranked.items)} passages "
              f"({elapsed_ms:.1f} ms):")
        for entry in payload["passages"]:
            title = entry["title"] or entry["doc_id"]
            print(f"  {entry['rank']}. {title}  (doc={entry['doc_id']}, "
                  f"score={entry['score']:.6g})")
    return 0


def cmd_stats(args) -> int:
    index = load_index(args.index)
    stats = index.kg.graph_stats().as_dict()
    if args.json:
        print(json.dumps(stats, indent=2))
    else:
        for key, value in stats.items():
            print(f"{key:>15}  {value}")
    return 0


def cmd_verify(args) -> int:
    index = load_index(args.index)
    kg = index.kg
    n = kg.node_count
    if n == 0:
        raise ValidationError("index has no nodes")
    rng = np.random.default_rng(args.seed)
    params = PprParams(damping=args.damping if args.damping is not None
                       else index.manifest.damping)
    worst = 0.0
    for _ in range(args.trials):
        support = rng.choice(n, size=min(n, 1 + int(rng.integers(0, 8))), replace=False)
        raw = rng.random(len(support)) + 1e-3
        raw /= raw.sum()
        reset = ResetVector(entries={int(i): float(v) for i, v in zip(support, raw)},
                            weight_factor=index.manifest.passage_weight_factor,
                            phrase_seed_ids=())
        iterative = run_ppr(kg, reset, params)
        oracle = dense_ppr_oracle(kg, reset, params.damping)
        worst = max(worst, float(np.max(np.abs(iterative.scores - oracle.scores))))
    agree = worst < args.tolerance
    print(f"oracle agreement: max L-inf diff {worst:.3e} "
          f"({'<' if agree else '>='} {args.tolerance:g}) over {args.trials} trials")
    return 0 if agree else 1


def _write_eval_outputs(args, report_payload: dict, per_query, plot_fn) -> None:
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report_payload, indent=2, ensure_ascii=False) + "\n",
                   encoding="utf-8")
    print(f"wrote {out}")
    if per_query is not None:
        sidecar = out.parent / (out.stem + ".per_query.jsonl")
        with open(sidecar, "w", encoding="utf-8") as handle:
            for record in per_query:
                handle.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")
        print(f"wrote {sidecar}")
    if plot_fn is not None and not args.no_plot:
        figure = out.parent / (out.stem + ".png")
        plot_fn(figure)
        print(f"wrote {figure}")


def cmd_eval(args) -> int:
    file_config = _load_config_file(args.config)
    queries = evaluation.read_queries_jsonl(args.queries)
    status = 0

    if args.task == "expansion":
        if not args.corpus:
            raise ValidationError("eval expansion requires --corpus")
        corpus = read_corpus_jsonl(args.corpus)
        index_config = _index_config(args, file_config)
        curve = evaluation.run_expansion(corpus, queries, segments=args.segments,
                                         index_config=index_config,
                                         incremental=args.incremental)
        _write_eval_outputs(args, curve.to_dict(), None,
                            lambda path: plots.plot_expansion_curve(curve, path))
        return 0

    if not args.index:
        raise ValidationError(f"eval {args.task} requires --index")
    index = load_index(args.index)
    config = _retrieval_config(args, file_config, index.manifest)
    retriever = _make_retriever(index, config, file_config)

    if args.task == "retrieval":
        report = evaluation.run_retrieval_eval(index, queries, config=config,
                                               retriever=retriever)
        _write_eval_outputs(args, report.to_dict(), report.per_query,
                            lambda path: plots.plot_retrieval_report(report, path))
        status = 1 if report.failed else 0
    elif args.task == "qa":
        reader = build_reader(ReaderClientConfig(
            mode=args.reader,
            endpoint=file_config.get("reader_endpoint",
                                     os.environ.get(ENV_READER_ENDPOINT))))
        report = evaluation.run_qa_eval(index, queries, reader=reader, config=config,
                                        retriever=retriever)
        _write_eval_outputs(args, report.to_dict(), report.per_query,
                            lambda path: plots.plot_qa_report(report, path))
        status = 1 if report.failed else 0
    elif args.task == "ablation":
        modes = args.modes or ["link=triple", "link=node", "link=ner",
                               "filter=off", "passage_nodes=off"]
        reports = evaluation.run_ablation(index, queries, modes, base_config=config,
                                          retriever=retriever)
        payload = {"modes": [r.to_dict() for r in reports]}
        _write_eval_outputs(args, payload, None,
                            lambda path: plots.plot_ablation(reports, path))
    else:  # pragma: no cover - argparse restricts choices
        raise ValidationError(f"unknown eval task {args.task!r}")
    return status


def cmd_serve(args) -> int:
    file_config = _load_config_file(args.config)
    index = load_index(args.index)
    host, _, port = args.bind.partition(":")
    config = ServiceConfig(
        host=host or "127.0.0.1",
        port=int(port or 8080),
        max_concurrent=args.max_concurrent,
        request_timeout_s=float(file_config.get("request_timeout", 30.0)),
        retrieval=_retrieval_config(args, file_config, index.manifest),
    )
    stats = index.kg.graph_stats()
    print(f"loaded index: {stats.total_nodes} nodes, {stats.total_edges} edges; "
          f"serving on {config.host}:{config.port}")
    serve(index, config)
    return 0


# -- parser ---------------------------------------------------------------------

def _add_retrieval_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--link-mode", dest="link_mode",
                        choices=["triple", "node", "ner"], default=None)
    parser.add_argument("--filter-mode", dest="filter_mode",
                        choices=["lexical", "keep_all", "keep_none", "remote", "off"],
                        default=None)
    parser.add_argument("--top-k", dest="top_k", type=int, default=None)
    parser.add_argument("--triple-top-k", dest="triple_top_k", type=int, default=None)
    parser.add_argument("--damping", type=float, default=None)
    parser.add_argument("--ppr-tol", dest="ppr_tol", type=float, default=None)
    parser.add_argument("--ppr-max-iter", dest="ppr_max_iter", type=int, default=None)
    parser.add_argument("--passage-weight", dest="passage_weight", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graphmem",
                                     description="Graph-memory passage retrieval engine")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_index = sub.add_parser("index", help="build an index from a JSONL corpus")
    p_index.add_argument("--corpus", required=True)
    p_index.add_argument("--out", required=True)
    p_index.add_argument("--config", default=None)
    p_index.add_argument("--dim", type=int, default=None)
    p_index.add_argument("--synonym-threshold", dest="synonym_threshold",
                         type=float, default=None)
    p_index.add_argument("--embedding-mode", dest="embedding_mode",
                         choices=["mock", "remote"], default=None)
    p_index.add_argument("--extraction-mode", dest="extraction_mode",
                         choices=["mock", "remote"], default=None)
    p_index.add_argument("--json", action="store_true")
    p_index.set_defaults(func=cmd_index)

    p_retrieve = sub.add_parser("retrieve", help="run one query against an index")
    p_retrieve.add_argument("--index", required=True)
    p_retrieve.add_argument("--query", required=True)
    p_retrieve.add_argument("--config", default=None)
    p_retrieve.add_argument("--json", action="store_true")
    _add_retrieval_flags(p_retrieve)
    p_retrieve.set_defaults(func=cmd_retrieve)

    p_stats = sub.add_parser("stats", help="print graph statistics")
    p_stats.add_argument("--index", required=True)
    p_stats.add_argument("--json", action="store_true")
    p_stats.set_defaults(func=cmd_stats)

    p_verify = sub.add_parser("verify",
                              help="cross-check the solver against the dense oracle")
    p_verify.add_argument("--index", required=True)
    p_verify.add_argument("--trials", type=int, default=20)
    p_verify.add_argument("--seed", type=int, default=0)
    p_verify.add_argument("--damping", type=float, default=None)
    p_verify.add_argument("--tolerance", type=float, default=1e-8)
    p_verify.set_defaults(func=cmd_verify)

    p_eval = sub.add_parser("eval", help="run an evaluation harness")
    p_eval.add_argument("task", choices=["retrieval", "qa", "expansion", "ablation"])
    p_eval.add_argument("--index", default=None)
    p_eval.add_argument("--queries", required=True)
    p_eval.add_argument("--out", required=True)
    p_eval.add_argument("--config", default=None)
    p_eval.add_argument("--corpus", default=None, help="expansion: corpus to segment")
    p_eval.add_argument("--segments", type=int, default=4)
    p_eval.add_argument("--incremental", action="store_true")
    p_eval.add_argument("--modes", nargs="*", default=None,
                        help="ablation modes, e.g. link=ner filter=off")
    p_eval.add_argument("--reader", choices=["extractive_mock", "remote"],
                        default="extractive_mock")
    p_eval.add_argument("--no-plot", dest="no_plot", action="store_true")
    _add_retrieval_flags(p_eval)
    p_eval.set_defaults(func=cmd_eval)

    p_serve = sub.add_parser("serve", help="serve an index over HTTP")
    p_serve.add_argument("--index", required=True)
    p_serve.add_argument("--bind", default="127.0.0.1:8080")
    p_serve.add_argument("--max-concurrent", dest="max_concurrent", type=int, default=8)
    p_serve.add_argument("--config", default=None)
    _add_retrieval_flags(p_serve)
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except GraphMemError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
