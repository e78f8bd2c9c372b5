"""Built-in lexical utilities (chrF, BLEU), the utility registry, and score-request types.

All builtin metrics are pure functions of their string arguments: identical
inputs produce bit-identical outputs on any platform.
"""

from __future__ import annotations

import difflib
import math
import threading
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

from .core import (
    REFERENCE_BASED,
    REFERENCE_FREE,
    DataError,
    UtilityFunction,
)


@dataclass(frozen=True, slots=True)
class ChrfConfig:
    max_ngram_order: int = 6
    beta: float = 2.0
    remove_whitespace: bool = True

    def __post_init__(self) -> None:
        if self.max_ngram_order < 1:
            raise ValueError("max_ngram_order must be >= 1")
        if self.beta <= 0:
            raise ValueError("beta must be > 0")


@dataclass(frozen=True, slots=True)
class BleuConfig:
    max_ngram_order: int = 4
    smoothing: str = "floor"
    floor: float = 0.1
    tokenization: str = "whitespace"

    def __post_init__(self) -> None:
        if self.max_ngram_order < 1:
            raise ValueError("max_ngram_order must be >= 1")
        if self.smoothing not in ("none", "floor"):
            raise ValueError(f"smoothing must be 'none' or 'floor', got {self.smoothing!r}")
        if self.tokenization not in ("whitespace", "char"):
            raise ValueError(
                f"tokenization must be 'whitespace' or 'char', got {self.tokenization!r}"
            )


def _char_ngrams(text: str, n: int) -> Counter:
    return Counter(text[i : i + n] for i in range(len(text) - n + 1))


def chrf(hypothesis: str, reference: str, cfg: ChrfConfig | None = None) -> float:
    """Character n-gram F-score in [0, 100].

    Precision/recall are averaged over n-gram orders 1..max. Orders where
    neither string has n-grams are skipped; orders where exactly one side has
    n-grams contribute zeros to both averages. This keeps chrf(x, x) == 100
    for every non-empty x while penalizing one-sided length mismatches.
    """
    cfg = cfg or ChrfConfig()
    if cfg.remove_whitespace:
        hypothesis = "".join(hypothesis.split())
        reference = "".join(reference.split())
    precision_sum = 0.0
    recall_sum = 0.0
    effective = 0
    for n in range(1, cfg.max_ngram_order + 1):
        hyp = _char_ngrams(hypothesis, n)
        ref = _char_ngrams(reference, n)
        hyp_total = sum(hyp.values())
        ref_total = sum(ref.values())
        if hyp_total == 0 and ref_total == 0:
            continue
        common = sum((hyp & ref).values())
        precision_sum += common / hyp_total if hyp_total else 0.0
        recall_sum += common / ref_total if ref_total else 0.0
        effective += 1
    if effective == 0:
        return 0.0
    precision = precision_sum / effective
    recall = recall_sum / effective
    beta_sq = cfg.beta * cfg.beta
    denom = beta_sq * precision + recall
    if denom == 0.0:
        return 0.0
    return 100.0 * (1.0 + beta_sq) * precision * recall / denom


def _tokenize(text: str, mode: str) -> list[str]:
    return list(text) if mode == "char" else text.split()


def _ngram_stats(
    hyp_tokens: Sequence[str], ref_tokens: Sequence[str], max_order: int
) -> tuple[list[int], list[int]]:
    correct = [0] * max_order
    total = [0] * max_order
    for n in range(1, max_order + 1):
        hyp = Counter(tuple(hyp_tokens[i : i + n]) for i in range(len(hyp_tokens) - n + 1))
        ref = Counter(tuple(ref_tokens[i : i + n]) for i in range(len(ref_tokens) - n + 1))
        correct[n - 1] = sum((hyp & ref).values())
        total[n - 1] = sum(hyp.values())
    return correct, total


def _bleu_from_stats(
    correct: Sequence[int],
    total: Sequence[int],
    hyp_len: int,
    ref_len: int,
    cfg: BleuConfig,
) -> float:
    if hyp_len == 0:
        return 0.0
    log_precisions: list[float] = []
    for n in range(1, cfg.max_ngram_order + 1):
        if total[n - 1] == 0:
            break
        if correct[n - 1] == 0:
            if cfg.smoothing == "floor":
                log_precisions.append(math.log(cfg.floor / total[n - 1]))
            else:
                return 0.0
        else:
            log_precisions.append(math.log(correct[n - 1] / total[n - 1]))
    if not log_precisions:
        return 0.0
    brevity = math.exp(min(0.0, 1.0 - ref_len / hyp_len))
    return 100.0 * brevity * math.exp(sum(log_precisions) / len(log_precisions))


def sentence_bleu(hypothesis: str, reference: str, cfg: BleuConfig | None = None) -> float:
    """Sentence BLEU in [0, 100]; defaults to floor(0.1) smoothing."""
    cfg = cfg or BleuConfig()
    hyp_tokens = _tokenize(hypothesis, cfg.tokenization)
    ref_tokens = _tokenize(reference, cfg.tokenization)
    correct, total = _ngram_stats(hyp_tokens, ref_tokens, cfg.max_ngram_order)
    return _bleu_from_stats(correct, total, len(hyp_tokens), len(ref_tokens), cfg)


def corpus_bleu(
    pairs: Sequence[tuple[str, str]], cfg: BleuConfig | None = None
) -> float:
    """Corpus BLEU over (hypothesis, reference) pairs: counts are pooled before
    the geometric mean and brevity penalty, which is not the mean of
    sentence-level scores. Defaults to no smoothing.
    """
    if not pairs:
        raise DataError("corpus_bleu requires a non-empty sequence of pairs")
    cfg = cfg or BleuConfig(smoothing="none")
    corrects = [0] * cfg.max_ngram_order
    totals = [0] * cfg.max_ngram_order
    hyp_len = 0
    ref_len = 0
    for hypothesis, reference in pairs:
        hyp_tokens = _tokenize(hypothesis, cfg.tokenization)
        ref_tokens = _tokenize(reference, cfg.tokenization)
        hyp_len += len(hyp_tokens)
        ref_len += len(ref_tokens)
        correct, total = _ngram_stats(hyp_tokens, ref_tokens, cfg.max_ngram_order)
        for i in range(cfg.max_ngram_order):
            corrects[i] += correct[i]
            totals[i] += total[i]
    return _bleu_from_stats(corrects, totals, hyp_len, ref_len, cfg)


@dataclass(frozen=True, slots=True)
class CrossBleuMatrix:
    """Square corpus-BLEU matrix between named systems; diagonal is 100."""

    names: tuple[str, ...]
    values: tuple[tuple[float, ...], ...]


def cross_bleu_matrix(
    systems: Mapping[str, Mapping[str, str]], cfg: BleuConfig | None = None
) -> CrossBleuMatrix:
    """Entry (i, j) scores system i's outputs against system j's as references.

    All systems must cover the same seg_id set; segments are aligned by seg_id.
    """
    names = list(systems.keys())
    if not names:
        raise DataError("cross_bleu_matrix requires at least one system")
    base_ids = set(systems[names[0]])
    for name in names[1:]:
        ids = set(systems[name])
        if ids != base_ids:
            missing = sorted(base_ids - ids)
            extra = sorted(ids - base_ids)
            raise DataError(
                f"system {name!r} seg_ids differ from {names[0]!r}: "
                f"missing={missing[:5]} extra={extra[:5]}"
            )
    ordered_ids = sorted(base_ids)
    rows = []
    for hyp_name in names:
        row = []
        for ref_name in names:
            if hyp_name == ref_name:
                row.append(100.0)
                continue
            pairs = [
                (systems[hyp_name][seg_id], systems[ref_name][seg_id])
                for seg_id in ordered_ids
            ]
            row.append(corpus_bleu(pairs, cfg))
        rows.append(tuple(row))
    return CrossBleuMatrix(names=tuple(names), values=tuple(rows))


# ---------------------------------------------------------------------------
# Scorer wire types and the utility registry.


@dataclass(frozen=True, slots=True)
class ScoreRequest:
    id: str
    mode: str
    source: str
    hypothesis: str
    reference: str | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("qe", "ref"):
            raise ValueError(f"mode must be 'qe' or 'ref', got {self.mode!r}")
        if self.mode == "ref" and self.reference is None:
            raise ValueError(f"request {self.id!r}: mode='ref' requires a reference")

    def to_obj(self) -> dict:
        obj = {
            "id": self.id,
            "mode": self.mode,
            "source": self.source,
            "hypothesis": self.hypothesis,
        }
        if self.reference is not None:
            obj["reference"] = self.reference
        return obj


@dataclass(frozen=True, slots=True)
class ScoreResponse:
    id: str
    score: float


class Utility:
    """A resolved utility metric that scores hypotheses for one segment.

    ``kind`` decides what each hypothesis is scored against: the segment's
    reference material (candidate pseudo-references under MBR) for
    reference_based utilities, the source for reference_free ones.
    """

    def __init__(
        self,
        name: str,
        kind: str,
        pair_fn: Callable[[str, str], float] | None = None,
        batch_fn: Callable[[Sequence[ScoreRequest]], Sequence[ScoreResponse]] | None = None,
    ) -> None:
        if kind not in (REFERENCE_BASED, REFERENCE_FREE):
            raise ValueError(f"unknown utility kind {kind!r}")
        if (pair_fn is None) == (batch_fn is None):
            raise ValueError("exactly one of pair_fn or batch_fn is required")
        self.name = name
        self.kind = kind
        self._pair_fn = pair_fn
        self._batch_fn = batch_fn
        self._lock = threading.Lock()
        self._next_id = 0

    def score_batch(
        self, source: str, items: Sequence[tuple[str, str | None]]
    ) -> list[float]:
        """Score (hypothesis, reference) items; reference is None for QE scoring."""
        return self.score_rows([(source, hyp, ref) for hyp, ref in items])

    def score_rows(self, rows: Sequence[tuple[str, str, str | None]]) -> list[float]:
        """Score (source, hypothesis, reference) rows with per-row sources."""
        if self._pair_fn is not None:
            if self.kind == REFERENCE_FREE:
                return [self._pair_fn(hyp, src) for src, hyp, _ in rows]
            return [self._pair_fn(hyp, ref) for _, hyp, ref in rows]
        with self._lock:
            start = self._next_id
            self._next_id += len(rows)
        mode = "qe" if self.kind == REFERENCE_FREE else "ref"
        requests = [
            ScoreRequest(
                id=f"u{start + offset}",
                mode=mode,
                source=src,
                hypothesis=hyp,
                reference=ref,
            )
            for offset, (src, hyp, ref) in enumerate(rows)
        ]
        responses = self._batch_fn(requests)
        by_id = {resp.id: resp.score for resp in responses}
        return [by_id[req.id] for req in requests]


_BUILTIN_SPECS: dict[str, UtilityFunction] = {
    "chrf": UtilityFunction(name="chrf", kind=REFERENCE_BASED, backend="builtin_chrf"),
    "chrf_qe": UtilityFunction(name="chrf_qe", kind=REFERENCE_FREE, backend="builtin_chrf"),
    "sentence_bleu": UtilityFunction(
        name="sentence_bleu", kind=REFERENCE_BASED, backend="builtin_sentence_bleu"
    ),
    "bleu": UtilityFunction(
        name="bleu", kind=REFERENCE_BASED, backend="builtin_sentence_bleu"
    ),
    "bleu_qe": UtilityFunction(
        name="bleu_qe", kind=REFERENCE_FREE, backend="builtin_sentence_bleu"
    ),
}


def known_utility_names() -> list[str]:
    return sorted(_BUILTIN_SPECS) + ["external:cmd=...", "external:http=host:port"]


def registry_resolve(name: str) -> UtilityFunction:
    """Map a utility name to its descriptor.

    Builtin names resolve directly; "external:cmd=..." and
    "external:http=host:port[,mode=qe|ref]" describe wire-protocol scorers.
    """
    if name in _BUILTIN_SPECS:
        return _BUILTIN_SPECS[name]
    if name.startswith("external:"):
        body = name[len("external:") :]
        parts = body.split(",")
        transport = parts[0]
        if not (transport.startswith("cmd=") or transport.startswith("http=")):
            raise DataError(
                f"external utility must start with cmd= or http=, got {transport!r}"
            )
        mode = "ref"
        for part in parts[1:]:
            key, _, value = part.partition("=")
            if key == "mode":
                if value not in ("qe", "ref"):
                    raise DataError(f"external utility mode must be qe or ref, got {value!r}")
                mode = value
            else:
                raise DataError(f"unknown external utility option {key!r}")
        kind = REFERENCE_FREE if mode == "qe" else REFERENCE_BASED
        return UtilityFunction(name=name, kind=kind, backend="external", endpoint=transport)
    suggestions = difflib.get_close_matches(name, list(_BUILTIN_SPECS), n=1)
    hint = f"; did you mean {suggestions[0]!r}?" if suggestions else ""
    raise DataError(
        f"unknown utility {name!r}{hint} (known: {', '.join(known_utility_names())})"
    )


def resolve_utility(
    spec: UtilityFunction | str,
    client_factory: Callable[[str], object] | None = None,
) -> Utility:
    """Turn a descriptor (or registry name) into a callable Utility.

    External backends need a client_factory mapping the endpoint descriptor to
    an object with a ``score_batch(requests)`` method.
    """
    if isinstance(spec, str):
        spec = registry_resolve(spec)
    if spec.backend == "builtin_chrf":
        cfg = ChrfConfig()
        return Utility(spec.name, spec.kind, pair_fn=lambda h, r: chrf(h, r, cfg))
    if spec.backend == "builtin_sentence_bleu":
        cfg = BleuConfig()
        return Utility(spec.name, spec.kind, pair_fn=lambda h, r: sentence_bleu(h, r, cfg))
    if client_factory is None:
        from .scorer_client import client_for_endpoint

        client_factory = client_for_endpoint
    client = client_factory(spec.endpoint)
    health = client.health()
    mode = "qe" if spec.kind == REFERENCE_FREE else "ref"
    reported = health.get("mode")
    if reported is not None and reported != mode:
        raise DataError(
            f"scorer at {spec.endpoint!r} runs mode={reported!r} but utility "
            f"{spec.name!r} needs mode={mode!r}"
        )
    return Utility(spec.name, spec.kind, batch_fn=client.score_batch)
