"""Tiny in-process HTTP servers speaking the three wire protocols."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


class WireStub:
    """Loopback HTTP server; route handlers map path -> fn(body) -> (status, payload)."""

    def __init__(self, routes):
        self.routes = dict(routes)
        self.requests: list[tuple[str, dict]] = []
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length) or b"{}")
                stub.requests.append((self.path, body))
                handler = stub.routes.get(self.path)
                if handler is None:
                    status, payload = 404, {"error": "no route"}
                else:
                    status, payload = handler(body)
                raw = json.dumps(payload).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(raw)))
                self.end_headers()
                self.wfile.write(raw)

            def log_message(self, *args):
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()

    @property
    def url(self) -> str:
        host, port = self.server.server_address
        return f"http://{host}:{port}"


def embeddings_route(vector_fn):
    """OpenAI-style embeddings endpoint backed by vector_fn(text) -> list[float]."""
    def handle(body):
        data = [{"index": i, "embedding": vector_fn(text)}
                for i, text in enumerate(body.get("input", []))]
        return 200, {"data": data}
    return handle


def chat_route(reply_fn):
    """OpenAI-style chat endpoint backed by reply_fn(user_content) -> str."""
    def handle(body):
        user = next((m["content"] for m in body.get("messages", [])
                     if m.get("role") == "user"), "")
        return 200, {"choices": [{"message": {"role": "assistant",
                                              "content": reply_fn(user)}}]}
    return handle


def rerank_route(score_fn):
    """Scoring endpoint backed by score_fn(query, passage, index) -> float."""
    def handle(body):
        query = body.get("query", "")
        scores = [score_fn(query, p, i) for i, p in enumerate(body.get("passages", []))]
        return 200, {"scores": scores}
    return handle
