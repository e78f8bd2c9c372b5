"""Client for external scorers speaking the line/HTTP wire protocol.

Requests and responses are UTF-8 JSON objects. Subprocess transport writes one
request per line and reads one response line per request; HTTP transport POSTs
a JSON array to /v1/score. A failed batch is retried exactly once.
"""

from __future__ import annotations

import json
import math
import shlex
import subprocess
import threading
import urllib.error
import urllib.request
from typing import Sequence

from .core import MbrkitError
from .metrics import ScoreRequest, ScoreResponse


class ScorerError(MbrkitError):
    """External scorer failure: transport, protocol, or bad scores."""


def _parse_response_obj(obj: object, raw: str) -> tuple[str | None, float | None, str | None]:
    """Return (id, score, error) from one response object."""
    if not isinstance(obj, dict) or ("score" not in obj and "error" not in obj):
        raise ScorerError(f"malformed scorer response: {raw!r}")
    resp_id = obj.get("id")
    if "error" in obj:
        return resp_id, None, str(obj["error"])
    score = obj["score"]
    if not isinstance(score, (int, float)) or not math.isfinite(score):
        raise ScorerError(f"non-finite score in response: {raw!r}")
    return resp_id, float(score), None


class _BaseScorerClient:
    """Shared matching and single-retry logic over a transport round trip."""

    def _round_trip(self, requests: Sequence[ScoreRequest]) -> list[tuple[str | None, float | None, str | None]]:
        raise NotImplementedError

    def score_batch(self, requests: Sequence[ScoreRequest]) -> list[ScoreResponse]:
        """Score a batch; responses are returned in request order."""
        if not requests:
            return []
        scores: dict[str, float] = {}
        pending = list(requests)
        for attempt in range(2):
            try:
                parsed = self._round_trip(pending)
            except ScorerError:
                if attempt == 1:
                    raise
                continue
            wanted = {req.id for req in pending}
            for resp_id, score, error in parsed:
                if resp_id is None or resp_id not in wanted:
                    continue
                if error is None and score is not None:
                    scores[resp_id] = score
            pending = [req for req in pending if req.id not in scores]
            if not pending:
                break
        if pending:
            missing = [req.id for req in pending]
            raise ScorerError(f"no score for request ids after retry: {missing}")
        return [ScoreResponse(id=req.id, score=scores[req.id]) for req in requests]

    def health(self) -> dict:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self) -> "_BaseScorerClient":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()


class SubprocessScorerClient(_BaseScorerClient):
    """Talks to a scorer subprocess over its standard streams."""

    def __init__(self, command: str | Sequence[str]) -> None:
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        self._proc = subprocess.Popen(
            argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            encoding="utf-8",
        )
        self._lock = threading.Lock()

    def _read_line(self) -> str:
        assert self._proc.stdout is not None
        line = self._proc.stdout.readline()
        if not line:
            raise ScorerError("scorer subprocess closed its output stream")
        return line

    def _round_trip(self, requests: Sequence[ScoreRequest]) -> list[tuple[str | None, float | None, str | None]]:
        assert self._proc.stdin is not None
        with self._lock:
            try:
                for req in requests:
                    self._proc.stdin.write(json.dumps(req.to_obj(), ensure_ascii=False) + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise ScorerError(f"scorer subprocess write failed: {exc}") from exc
            lines = [self._read_line() for _ in requests]
        parsed = []
        for line in lines:
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ScorerError(f"malformed scorer response line: {line!r}") from exc
            parsed.append(_parse_response_obj(obj, line))
        return parsed

    def health(self) -> dict:
        assert self._proc.stdin is not None
        with self._lock:
            self._proc.stdin.write('{"ping": true}\n')
            self._proc.stdin.flush()
            line = self._read_line()
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ScorerError(f"malformed health response: {line!r}") from exc
        if obj.get("status") != "ok":
            raise ScorerError(f"scorer health check failed: {line!r}")
        return obj

    def close(self) -> None:
        if self._proc.stdin is not None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
        self._proc.wait(timeout=10)


class HttpScorerClient(_BaseScorerClient):
    """Talks to a scorer service over local HTTP."""

    def __init__(self, address: str, max_inflight: int = 4, timeout: float = 30.0) -> None:
        if not address.startswith(("http://", "https://")):
            address = "http://" + address
        self._base = address.rstrip("/")
        self._timeout = timeout
        self._inflight = threading.Semaphore(max_inflight)

    def _round_trip(self, requests: Sequence[ScoreRequest]) -> list[tuple[str | None, float | None, str | None]]:
        body = json.dumps([req.to_obj() for req in requests], ensure_ascii=False).encode("utf-8")
        http_req = urllib.request.Request(
            self._base + "/v1/score",
            data=body,
            headers={"Content-Type": "application/json"},
            method="POST",
        )
        with self._inflight:
            try:
                with urllib.request.urlopen(http_req, timeout=self._timeout) as resp:
                    raw = resp.read().decode("utf-8")
            except (urllib.error.URLError, OSError) as exc:
                raise ScorerError(f"scorer HTTP request failed: {exc}") from exc
        try:
            payload = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ScorerError(f"malformed scorer response body: {raw!r}") from exc
        if not isinstance(payload, list):
            raise ScorerError(f"scorer response body is not an array: {raw!r}")
        return [_parse_response_obj(obj, json.dumps(obj)) for obj in payload]

    def health(self) -> dict:
        try:
            with urllib.request.urlopen(self._base + "/v1/health", timeout=self._timeout) as resp:
                raw = resp.read().decode("utf-8")
        except (urllib.error.URLError, OSError) as exc:
            raise ScorerError(f"scorer health check failed: {exc}") from exc
        obj = json.loads(raw)
        if obj.get("status") != "ok":
            raise ScorerError(f"scorer health check failed: {raw!r}")
        return obj


def client_for_endpoint(endpoint: str) -> _BaseScorerClient:
    """Build a client from an endpoint descriptor: "cmd=<argv>" or "http=host:port"."""
    if endpoint.startswith("cmd="):
        return SubprocessScorerClient(endpoint[len("cmd=") :])
    if endpoint.startswith("http="):
        return HttpScorerClient(endpoint[len("http=") :])
    raise ScorerError(f"endpoint must start with cmd= or http=, got {endpoint!r}")
