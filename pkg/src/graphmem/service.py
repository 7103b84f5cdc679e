"""Read-only HTTP retrieval service over a frozen in-memory index.

Endpoints:
  POST /retrieve   {"query": ..., "top_k"?, "link_mode"?} -> ranked passages
  GET  /healthz    200 + index fingerprint
  GET  /stats      graph statistics

Requests above the concurrency cap wait briefly, then are shed with a 503
and a Retry-After header.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import threading
import time
import uuid
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, HTTPServer
from socketserver import ThreadingMixIn

from .errors import ConfigError
from .retriever import LINK_MODES, RetrievalConfig, Retriever
from .storage import GraphIndex

logger = logging.getLogger(__name__)


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    max_concurrent: int = 8
    queue_timeout_s: float = 0.5
    request_timeout_s: float = 30.0
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)


class ThreadingHTTPServer(ThreadingMixIn, HTTPServer):
    daemon_threads = True


def response_payload(index: GraphIndex, ranked, timing_ms: float) -> dict:
    passages = []
    for rank, (node_id, score) in enumerate(ranked.items, 1):
        passage = index.kg.passage(node_id)
        passages.append({"doc_id": passage.doc_id, "title": passage.title,
                         "score": score, "rank": rank})
    return {
        "passages": passages,
        "provenance": ranked.provenance,
        "diagnostics": ranked.diagnostics,
        "timing_ms": timing_ms,
    }


def make_server(index: GraphIndex, config: ServiceConfig | None = None,
                retriever: Retriever | None = None) -> ThreadingHTTPServer:
    config = config or ServiceConfig()
    if config.max_concurrent < 1:
        raise ConfigError("max_concurrent must be >= 1")
    retriever = retriever or Retriever(index, config=config.retrieval)
    slots = threading.Semaphore(config.max_concurrent)
    stats = index.kg.graph_stats().as_dict()

    class Handler(BaseHTTPRequestHandler):
        server_version = "graphmem"
        timeout = config.request_timeout_s

        def log_message(self, fmt, *args):  # route access logs through logging
            logger.info("%s " + fmt, self.address_string(), *args)

        def _send_json(self, status: int, payload: dict, headers: dict | None = None):
            body = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            for key, value in (headers or {}).items():
                self.send_header(key, value)
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            if self.path == "/healthz":
                self._send_json(200, {"status": "ok",
                                      "fingerprint": index.manifest.fingerprint})
            elif self.path == "/stats":
                self._send_json(200, stats)
            else:
                self._send_json(404, {"error": "not found"})

        def do_POST(self):
            if self.path != "/retrieve":
                self._send_json(404, {"error": "not found"})
                return
            trace_id = uuid.uuid4().hex[:12]
            try:
                length = int(self.headers.get("Content-Length", "0"))
                raw = self.rfile.read(length)
                request = json.loads(raw.decode("utf-8"))
            except (ValueError, UnicodeDecodeError):
                self._send_json(400, {"error": "body must be valid JSON"})
                return
            if not isinstance(request, dict) or not isinstance(request.get("query"), str) \
                    or not request["query"].strip():
                self._send_json(400, {"error": "field 'query' (non-empty string) is required"})
                return
            overrides = {}
            top_k = request.get("top_k")
            if top_k is not None:
                if not isinstance(top_k, int) or top_k < 1:
                    self._send_json(400, {"error": "top_k must be a positive integer"})
                    return
                overrides["output_top_k"] = top_k
            link_mode = request.get("link_mode")
            if link_mode is not None:
                if link_mode not in LINK_MODES:
                    self._send_json(400, {"error": f"link_mode must be one of {LINK_MODES}"})
                    return
                overrides["link_mode"] = link_mode

            if not slots.acquire(timeout=config.queue_timeout_s):
                self._send_json(503, {"error": "server at capacity, retry shortly"},
                                headers={"Retry-After": "1"})
                return
            try:
                started = time.perf_counter()
                request_config = dataclasses.replace(retriever.config, **overrides) \
                    if overrides else retriever.config
                ranked = retriever.retrieve(request["query"], request_config)
                elapsed_ms = (time.perf_counter() - started) * 1000.0
                self._send_json(200, response_payload(index, ranked, elapsed_ms))
                logger.info("trace=%s query retrieved in %.1f ms", trace_id, elapsed_ms)
            except Exception:
                logger.exception("trace=%s retrieval failed", trace_id)
                self._send_json(500, {"error": "internal error", "trace_id": trace_id})
            finally:
                slots.release()

    server = ThreadingHTTPServer((config.host, config.port), Handler)
    footprint_mb = _memory_footprint_bytes(index) / 1e6
    logger.info("serving index %s on %s:%d (cap %d, ~%.1f MB resident index)",
                index.manifest.fingerprint[:12], config.host,
                server.server_address[1], config.max_concurrent, footprint_mb)
    return server


def _memory_footprint_bytes(index: GraphIndex) -> int:
    vectors = sum(getattr(index.stores, kind).matrix.nbytes
                  for kind in ("phrase", "passage", "triple"))
    matrix, dangling = index.kg.transition()
    graph = matrix.data.nbytes + matrix.indices.nbytes + matrix.indptr.nbytes
    return vectors + graph + dangling.nbytes


def serve(index: GraphIndex, config: ServiceConfig | None = None) -> None:
    server = make_server(index, config)
    try:
        server.serve_forever()
    finally:
        server.server_close()
