"""Protocol tests, including the acceptance checks that pair this service with
the toolkit's client: batch-partitioning round trips over stdio and HTTP,
malformed-line behavior, and stdio/HTTP mode parity."""

from __future__ import annotations

import json
import subprocess
import sys
import threading

import pytest

from mbrkit.metrics import ScoreRequest
from mbrkit.scorer_client import HttpScorerClient, SubprocessScorerClient

from scorer_service.backends import (
    StandinBackend,
    char_trigrams,
    load_backend,
    transliterate,
    trigram_f1,
)
from scorer_service.server import make_http_server

STDIO_CMD = [sys.executable, "-m", "scorer_service.cli", "--stdio"]


def words(i: int) -> str:
    vocab = ["wasser", "fluss", "berg", "tal", "wald", "stern", "nacht", "morgen"]
    return " ".join(vocab[(i + k) % len(vocab)] for k in range(1 + i % 4))


def make_requests(count: int, mode: str) -> list[ScoreRequest]:
    return [
        ScoreRequest(
            id=f"q{i}",
            mode=mode,
            source=words(i),
            hypothesis=words(i * 3 + 1),
            reference=words(i * 5 + 2) if mode == "ref" else None,
        )
        for i in range(count)
    ]


@pytest.fixture()
def http_address():
    server = make_http_server(StandinBackend("ref"), 0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"127.0.0.1:{server.server_address[1]}"
    server.shutdown()


@pytest.fixture()
def http_address_qe():
    server = make_http_server(StandinBackend("qe"), 0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"127.0.0.1:{server.server_address[1]}"
    server.shutdown()


# ---------------------------------------------------------------------------
# Stand-in metric.


def test_standin_identity_is_one() -> None:
    backend = StandinBackend("ref")
    assert backend.score("src", "genau gleich", "genau gleich") == 1.0


def test_standin_disjoint_characters_is_zero() -> None:
    backend = StandinBackend("ref")
    assert backend.score("src", "aaa bbb", "xyz qrs") == 0.0


def test_standin_fixed_triple_matches_independent_f1() -> None:
    source, hypothesis, reference = "Wasser Im Fluss", "wasser im tal", "wasser am fluss"

    def brute_grams(text: str) -> dict[str, int]:
        table: dict[str, int] = {}
        if len(text) < 3:
            if text:
                table[text] = 1
            return table
        for i in range(len(text) - 2):
            g = text[i : i + 3]
            table[g] = table.get(g, 0) + 1
        return table

    def brute_f1(a: str, b: str) -> float:
        ga, gb = brute_grams(a), brute_grams(b)
        common = sum(min(c, gb.get(g, 0)) for g, c in ga.items())
        total = sum(ga.values()) + sum(gb.values())
        return 2.0 * common / total if total else (1.0 if a == b else 0.0)

    ref_backend = StandinBackend("ref")
    assert ref_backend.score(source, hypothesis, reference) == pytest.approx(
        brute_f1(hypothesis, reference), abs=1e-12
    )
    qe_backend = StandinBackend("qe")
    target = source.lower()
    expected = brute_f1(hypothesis, target) * (
        min(len(hypothesis), len(target)) / max(len(hypothesis), len(target))
    )
    assert qe_backend.score(source, hypothesis) == pytest.approx(expected, abs=1e-12)


def test_standin_scores_bounded() -> None:
    backend = StandinBackend("qe")
    for i in range(200):
        score = backend.score(words(i), words(i * 7 + 3))
        assert 0.0 <= score <= 1.0


def test_transliterate_and_trigram_helpers() -> None:
    assert transliterate("AbC") == "abc"
    assert char_trigrams("ab")["ab"] == 1
    assert char_trigrams("") == {}
    assert trigram_f1("", "") == 1.0
    assert trigram_f1("", "abc") == 0.0


def test_load_backend_standin_and_module_path() -> None:
    assert load_backend("standin", "qe").mode == "qe"
    loaded = load_backend("scorer_service.backends:StandinBackend", "ref")
    assert loaded.name == "standin"
    with pytest.raises(ValueError):
        load_backend("bogus-without-colon", "qe")


# ---------------------------------------------------------------------------
# Stdio mode.


def raw_stdio_session(lines: list[str], mode: str = "ref") -> list[str]:
    proc = subprocess.run(
        STDIO_CMD + ["--mode", mode],
        input="\n".join(lines) + "\n",
        capture_output=True,
        text=True,
        timeout=30,
    )
    assert proc.returncode == 0
    return proc.stdout.splitlines()


def test_stdio_ping_returns_health() -> None:
    out = raw_stdio_session(['{"ping": true}'])
    health = json.loads(out[0])
    assert health == {"status": "ok", "metric": "standin", "mode": "ref"}


def test_stdio_three_requests_three_responses() -> None:
    requests = [
        json.dumps({"id": f"r{i}", "mode": "ref", "source": "s",
                    "hypothesis": words(i), "reference": words(i + 1)})
        for i in range(3)
    ]
    out = raw_stdio_session(requests)
    assert [json.loads(line)["id"] for line in out] == ["r0", "r1", "r2"]
    assert all("score" in json.loads(line) for line in out)


def test_stdio_malformed_line_yields_one_error_and_no_lost_responses() -> None:
    good = [
        json.dumps({"id": f"g{i}", "mode": "ref", "source": "s",
                    "hypothesis": words(i), "reference": words(i + 2)})
        for i in range(4)
    ]
    lines = good[:2] + ["this is { not json"] + good[2:]
    out = raw_stdio_session(lines)
    assert len(out) == 5
    parsed = [json.loads(line) for line in out]
    errors = [p for p in parsed if "error" in p]
    assert len(errors) == 1
    assert errors[0]["id"] is None
    scored_ids = [p["id"] for p in parsed if "score" in p]
    assert scored_ids == ["g0", "g1", "g2", "g3"]


def test_stdio_mode_mismatch_is_an_error_object() -> None:
    request = json.dumps({"id": "x", "mode": "qe", "source": "s", "hypothesis": "h"})
    out = raw_stdio_session([request], mode="ref")
    obj = json.loads(out[0])
    assert obj["id"] == "x"
    assert "mode" in obj["error"]


def test_stdio_eof_exits_cleanly() -> None:
    proc = subprocess.run(
        STDIO_CMD, input="", capture_output=True, text=True, timeout=30
    )
    assert proc.returncode == 0
    assert proc.stdout == ""


# ---------------------------------------------------------------------------
# HTTP mode.


def test_http_health_and_empty_array(http_address: str) -> None:
    client = HttpScorerClient(http_address)
    health = client.health()
    assert health == {"status": "ok", "metric": "standin", "mode": "ref"}
    assert client.score_batch([]) == []


def test_http_large_body(http_address: str) -> None:
    client = HttpScorerClient(http_address)
    requests = make_requests(1000, "ref")
    responses = client.score_batch(requests)
    assert len(responses) == 1000
    assert [r.id for r in responses] == [req.id for req in requests]


def test_http_mode_mismatch_is_400_naming_the_field(http_address: str) -> None:
    import urllib.request
    import urllib.error

    body = json.dumps(
        [{"id": "x", "mode": "qe", "source": "s", "hypothesis": "h"}]
    ).encode()
    request = urllib.request.Request(
        f"http://{http_address}/v1/score", data=body, method="POST",
        headers={"Content-Type": "application/json"},
    )
    with pytest.raises(urllib.error.HTTPError) as err:
        urllib.request.urlopen(request)
    assert err.value.code == 400
    payload = json.loads(err.value.read().decode())
    assert "mode" in payload["error"]


def test_http_invalid_body_is_400(http_address: str) -> None:
    import urllib.request
    import urllib.error

    request = urllib.request.Request(
        f"http://{http_address}/v1/score", data=b"{not json", method="POST",
        headers={"Content-Type": "application/json"},
    )
    with pytest.raises(urllib.error.HTTPError) as err:
        urllib.request.urlopen(request)
    assert err.value.code == 400


# ---------------------------------------------------------------------------
# Acceptance: protocol round-trip and mode parity with the toolkit client.


def test_acceptance_protocol_round_trip_stdio_and_http(http_address: str) -> None:
    """1000 mixed requests in batch sizes {1, 64, 256}: identical scores
    across partitionings, over both transports."""
    requests = make_requests(1000, "ref")

    def scores_in_batches(client, size: int) -> list[float]:
        out: list[float] = []
        for start in range(0, len(requests), size):
            out.extend(r.score for r in client.score_batch(requests[start : start + size]))
        return out

    with SubprocessScorerClient(STDIO_CMD + ["--mode", "ref"]) as stdio_client:
        assert stdio_client.health()["status"] == "ok"
        stdio_scores = {size: scores_in_batches(stdio_client, size) for size in (1, 64, 256)}
    assert stdio_scores[1] == stdio_scores[64] == stdio_scores[256]

    http_client = HttpScorerClient(http_address)
    http_scores = {size: scores_in_batches(http_client, size) for size in (64, 256)}
    assert http_scores[64] == http_scores[256] == stdio_scores[64]
    print("[PASS] protocol round-trip: 1000 requests, partitions {1, 64, 256} identical")


def test_acceptance_mode_parity_stdio_vs_http(http_address_qe: str) -> None:
    """An identical 500-request qe workload scores identically over stdio
    and HTTP."""
    requests = make_requests(500, "qe")
    with SubprocessScorerClient(STDIO_CMD + ["--mode", "qe"]) as stdio_client:
        stdio_scores = [r.score for r in stdio_client.score_batch(requests)]
    http_client = HttpScorerClient(http_address_qe)
    http_scores = [r.score for r in http_client.score_batch(requests)]
    assert stdio_scores == http_scores
    backend = StandinBackend("qe")
    direct = [backend.score(req.source, req.hypothesis) for req in requests]
    assert stdio_scores == direct
    print("[PASS] mode parity: 500-request workload identical over stdio and HTTP")
