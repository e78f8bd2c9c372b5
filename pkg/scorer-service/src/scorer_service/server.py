"""Wire-protocol servers: line-delimited JSON over stdio and a small HTTP mode.

Both modes validate requests the same way. Stdio answers every input line
with exactly one output line (malformed input yields an error object, never a
dropped response) and flushes per line. HTTP validates the whole batch and
rejects invalid bodies with status 400.
"""

from __future__ import annotations

import json
import math
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import IO

from .backends import ScorerBackend


class RequestError(ValueError):
    """Invalid request object; the message names the offending field."""


def health_obj(backend: ScorerBackend) -> dict:
    return {"status": "ok", "metric": backend.name, "mode": backend.mode}


def validate_request(obj: object, backend_mode: str) -> tuple[object, str, str, str | None]:
    """Return (id, source, hypothesis, reference) or raise RequestError."""
    if not isinstance(obj, dict):
        raise RequestError("request must be a JSON object")
    if "id" not in obj:
        raise RequestError("missing field 'id'")
    req_id = obj["id"]
    mode = obj.get("mode")
    if mode not in ("qe", "ref"):
        raise RequestError(f"field 'mode' must be 'qe' or 'ref', got {mode!r}")
    if mode != backend_mode:
        raise RequestError(
            f"field 'mode' is {mode!r} but this scorer runs mode={backend_mode!r}"
        )
    source = obj.get("source")
    hypothesis = obj.get("hypothesis")
    if not isinstance(source, str):
        raise RequestError("field 'source' must be a string")
    if not isinstance(hypothesis, str):
        raise RequestError("field 'hypothesis' must be a string")
    reference = obj.get("reference")
    if mode == "ref" and not isinstance(reference, str):
        raise RequestError("field 'reference' is required when mode='ref'")
    return req_id, source, hypothesis, reference


def score_one(backend: ScorerBackend, obj: object) -> dict:
    req_id, source, hypothesis, reference = validate_request(obj, backend.mode)
    score = backend.score(source, hypothesis, reference)
    if not math.isfinite(score):
        raise RequestError(f"backend produced a non-finite score for id {req_id!r}")
    return {"id": req_id, "score": score}


def serve_stdio(backend: ScorerBackend, stdin: IO[str], stdout: IO[str]) -> int:
    """One response line per input line until EOF; returns exit code 0."""
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            stdout.write(json.dumps({"id": None, "error": f"malformed JSON: {exc}"}) + "\n")
            stdout.flush()
            continue
        if isinstance(obj, dict) and obj.get("ping"):
            stdout.write(json.dumps(health_obj(backend)) + "\n")
            stdout.flush()
            continue
        try:
            response = score_one(backend, obj)
        except RequestError as exc:
            req_id = obj.get("id") if isinstance(obj, dict) else None
            response = {"id": req_id, "error": str(exc)}
        stdout.write(json.dumps(response, ensure_ascii=False) + "\n")
        stdout.flush()
    return 0


def make_http_server(backend: ScorerBackend, port: int) -> ThreadingHTTPServer:
    """Build (but do not run) the HTTP server; callers own serve_forever()."""

    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args: object) -> None:
            pass

        def _send(self, status: int, payload: object) -> None:
            body = json.dumps(payload, ensure_ascii=False).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self) -> None:
            if self.path == "/v1/health":
                self._send(200, health_obj(backend))
            else:
                self._send(404, {"error": f"unknown path {self.path}"})

        def do_POST(self) -> None:
            if self.path != "/v1/score":
                self._send(404, {"error": f"unknown path {self.path}"})
                return
            try:
                length = int(self.headers.get("Content-Length", "0"))
                payload = json.loads(self.rfile.read(length).decode("utf-8"))
            except (ValueError, json.JSONDecodeError) as exc:
                self._send(400, {"error": f"invalid JSON body: {exc}"})
                return
            if not isinstance(payload, list):
                self._send(400, {"error": "body must be a JSON array of requests"})
                return
            responses = []
            for index, obj in enumerate(payload):
                try:
                    responses.append(score_one(backend, obj))
                except RequestError as exc:
                    self._send(400, {"error": f"request {index}: {exc}"})
                    return
            self._send(200, responses)

    return ThreadingHTTPServer(("127.0.0.1", port), Handler)


def serve_http(backend: ScorerBackend, port: int) -> int:
    server = make_http_server(backend, port)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0
