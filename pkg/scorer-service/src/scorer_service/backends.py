"""Scoring backends: the deterministic lexical stand-in plus a module-path hook.

The stand-in formula is pinned in the README so clients can assert values:
character-3-gram multiset F1, with a length-ratio damping factor in qe mode.
Scores are always finite and in [0, 1].
"""

from __future__ import annotations

import importlib
from collections import Counter
from typing import Protocol, runtime_checkable


@runtime_checkable
class ScorerBackend(Protocol):
    name: str
    mode: str  # "qe" | "ref"

    def score(self, source: str, hypothesis: str, reference: str | None = None) -> float:
        ...


def char_trigrams(text: str) -> Counter:
    """All contiguous 3-char substrings; a shorter non-empty string is one gram."""
    if len(text) >= 3:
        return Counter(text[i : i + 3] for i in range(len(text) - 2))
    if text:
        return Counter([text])
    return Counter()


def trigram_f1(a: str, b: str) -> float:
    """Multiset F1 between the trigram bags of two strings."""
    grams_a = char_trigrams(a)
    grams_b = char_trigrams(b)
    total = sum(grams_a.values()) + sum(grams_b.values())
    if total == 0:
        return 1.0 if a == b else 0.0
    common = sum((grams_a & grams_b).values())
    return 2.0 * common / total


def transliterate(text: str) -> str:
    """Per-character lowercasing table standing in for a source translator."""
    return "".join(ch.lower() for ch in text)


def length_ratio_penalty(a: str, b: str) -> float:
    if not a and not b:
        return 1.0
    if not a or not b:
        return 0.0
    return min(len(a), len(b)) / max(len(a), len(b))


class StandinBackend:
    """Deterministic lexical stand-in for a neural utility metric."""

    def __init__(self, mode: str) -> None:
        if mode not in ("qe", "ref"):
            raise ValueError(f"mode must be 'qe' or 'ref', got {mode!r}")
        self.name = "standin"
        self.mode = mode

    def score(self, source: str, hypothesis: str, reference: str | None = None) -> float:
        if self.mode == "ref":
            return trigram_f1(hypothesis, reference or "")
        target = transliterate(source)
        return trigram_f1(hypothesis, target) * length_ratio_penalty(hypothesis, target)


def load_backend(spec: str, mode: str) -> ScorerBackend:
    """Resolve "standin" or a "module.path:attribute" to a backend instance.

    The attribute may be a backend object or a callable taking the mode.
    """
    if spec == "standin":
        return StandinBackend(mode)
    module_name, _, attribute = spec.partition(":")
    if not attribute:
        raise ValueError(f"backend spec must be 'standin' or 'module:attr', got {spec!r}")
    module = importlib.import_module(module_name)
    target = getattr(module, attribute)
    backend = target(mode) if callable(target) and not isinstance(target, ScorerBackend) else target
    if backend.mode != mode:
        raise ValueError(
            f"backend {backend.name!r} is mode={backend.mode}, requested {mode}"
        )
    return backend
