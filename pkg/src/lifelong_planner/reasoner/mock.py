"""Local chat-completion endpoint with scripted replies and injected faults, for tests."""
from __future__ import annotations

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

MODES = ("decide", "garbage", "prose", "invalid", "timeout", "error", "bad_json", "empty")


class MockLlmServer:
    """``mode`` picks the reply: ``decide`` answers ``DECISION: cluster=<cluster>``; the
    others return malformed text, an unknown cluster, HTTP 500, broken JSON, or stall
    for ``delay`` seconds. ``mode`` may be a callable ``(request_index) -> mode``."""

    def __init__(self, mode="decide", cluster: int = 0, delay: float = 2.0):
        self.mode = mode
        self.cluster = cluster
        self.delay = delay
        self.requests: list[dict] = []
        self._server = ThreadingHTTPServer(("127.0.0.1", 0), self._handler())
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}/v1/chat/completions"

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._server.shutdown()
        self._server.server_close()

    def _current_mode(self) -> str:
        return self.mode(len(self.requests) - 1) if callable(self.mode) else self.mode

    def _handler(self):
        mock = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                try:
                    mock.requests.append(json.loads(self.rfile.read(length)))
                except json.JSONDecodeError:
                    mock.requests.append({})
                mode = mock._current_mode()
                if mode == "timeout":
                    time.sleep(mock.delay)
                if mode == "error":
                    self.send_response(500)
                    self.end_headers()
                    return
                content = {
                    "decide": f"The lead is braking.\nDECISION: cluster={mock.cluster}",
                    "invalid": "DECISION: cluster=999",
                    "garbage": "\x00\x17 DECISION cluster == ???",
                    "prose": "I would drive carefully and keep a safe distance.",
                    "timeout": f"DECISION: cluster={mock.cluster}",
                    "empty": "",
                }.get(mode, "")
                body = b"{not json" if mode == "bad_json" else json.dumps(
                    {"choices": [{"message": {"role": "assistant", "content": content}}]}).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                try:
                    self.wfile.write(body)
                except (BrokenPipeError, ConnectionResetError):
                    pass

        return Handler
