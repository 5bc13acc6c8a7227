"""Deterministic scripted chat-completions server for tests and demos.

The script maps (model, article key) pairs to canned response texts; the
article key is extracted from the user message with a configurable regex.
The server also keeps a timestamped request log (GET /__log) so tests can
verify pacing and retry behavior from the server's point of view.
"""

from __future__ import annotations

import json
import re
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional


@dataclass
class MockScript:
    """Scripted behavior: per-model keyed responses, defaults, failures."""

    key_pattern: str = r"\[#([A-Za-z0-9_-]+)\]"
    default: str = "Classification: Factually Correct\nExplanation: scripted default."
    latency_ms: float = 0.0
    models: dict[str, dict] = field(default_factory=dict)
    # model -> {"times": N, "status": code}: fail the first N requests
    failures: dict[str, dict] = field(default_factory=dict)

    @classmethod
    def from_file(cls, path: str | Path) -> "MockScript":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            key_pattern=data.get("key_pattern", cls.key_pattern),
            default=data.get("default", cls.default),
            latency_ms=data.get("latency_ms", 0.0),
            models=data.get("models", {}),
            failures=data.get("failures", {}),
        )

    def response_for(self, model: str, prompt: str) -> str:
        entry = self.models.get(model, {})
        match = re.search(self.key_pattern, prompt)
        if match:
            keyed = entry.get("responses", {}).get(match.group(1))
            if keyed is not None:
                return keyed
        return entry.get("default", self.default)


class _Handler(BaseHTTPRequestHandler):
    # self.server carries script/request_log/failure_counts/lock, attached
    # by MockLlmServer below.

    def log_message(self, *args) -> None:  # silence default stderr chatter
        pass

    def do_GET(self) -> None:
        if self.path == "/__log":
            body = json.dumps(self.server.request_log).encode("utf-8")
            self._send(200, body)
        elif self.path == "/__health":
            self._send(200, b'{"ok": true}')
        else:
            self._send(404, b'{"error": "not found"}')

    def do_POST(self) -> None:
        if not self.path.endswith("/chat/completions"):
            self._send(404, b'{"error": "not found"}')
            return
        length = int(self.headers.get("Content-Length", "0"))
        try:
            payload = json.loads(self.rfile.read(length))
            model = payload["model"]
            prompt = "\n".join(
                message.get("content", "")
                for message in payload["messages"]
                if message.get("role") == "user"
            )
        except (ValueError, KeyError, TypeError):
            self._send(400, b'{"error": "bad request"}')
            return

        script = self.server.script
        with self.server.lock:
            self.server.request_log.append(
                {"ts": time.monotonic(), "model": model, "path": self.path}
            )
            failure = script.failures.get(model)
            if failure and self.server.failure_counts.get(model, 0) < failure.get("times", 0):
                self.server.failure_counts[model] = self.server.failure_counts.get(model, 0) + 1
                status = failure.get("status", 500)
                self._send(status, json.dumps({"error": f"scripted {status}"}).encode())
                return

        if script.latency_ms:
            time.sleep(script.latency_ms / 1000.0)
        text = script.response_for(model, prompt)
        body = json.dumps(
            {
                "id": "mock-completion",
                "object": "chat.completion",
                "model": model,
                "choices": [
                    {
                        "index": 0,
                        "message": {"role": "assistant", "content": text},
                        "finish_reason": "stop",
                    }
                ],
                "usage": {
                    "prompt_tokens": len(prompt) // 4,
                    "completion_tokens": len(text) // 4,
                    "total_tokens": len(prompt) // 4 + len(text) // 4,
                },
            }
        ).encode("utf-8")
        self._send(200, body)

    def _send(self, status: int, body: bytes) -> None:
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


class MockLlmServer:
    """Threaded HTTP server wrapping a MockScript. Use as a context manager."""

    def __init__(self, script: Optional[MockScript] = None, host: str = "127.0.0.1", port: int = 0):
        self.script = script or MockScript()
        self.request_log: list[dict] = []
        self.failure_counts: dict[str, int] = {}
        self.lock = threading.Lock()
        self._httpd = ThreadingHTTPServer((host, port), _Handler)
        self._httpd.script = self.script  # type: ignore[attr-defined]
        self._httpd.request_log = self.request_log  # type: ignore[attr-defined]
        self._httpd.failure_counts = self.failure_counts  # type: ignore[attr-defined]
        self._httpd.lock = self.lock  # type: ignore[attr-defined]
        self._thread: Optional[threading.Thread] = None

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def base_url(self) -> str:
        return f"http://127.0.0.1:{self.port}/v1"

    def start(self) -> "MockLlmServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self) -> "MockLlmServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def serve_forever(script_path: Optional[str], host: str, port: int) -> None:
    """Blocking entry point for the CLI mock-llm subcommand."""
    script = MockScript.from_file(script_path) if script_path else MockScript()
    server = MockLlmServer(script, host=host, port=port)
    print(f"mock-llm listening on http://{host}:{server.port}/v1 (Ctrl-C to stop)")
    try:
        server._httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server._httpd.server_close()
