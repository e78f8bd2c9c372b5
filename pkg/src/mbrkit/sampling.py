"""Candidate generation: epsilon sampling, greedy and beam decoding, toy provider.

Randomness comes from a counter-based SplitMix64 generator so sampled outputs
are bit-identical across platforms and worker counts. Each candidate draws
from a seed derived from (seed, seg_id, sample_index), which makes per-segment
sampling order-independent of scheduling.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

from .core import Candidate, CandidateSet, DataError, Segment

_MASK64 = (1 << 64) - 1
_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15

BOS_TOKEN = "<s>"
DEFAULT_EOS_TOKEN = "</s>"


def mix64(value: int) -> int:
    """SplitMix64 finalizer: a fixed 64-bit avalanche of the input."""
    z = value & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def fnv1a64(text: str) -> int:
    """FNV-1a hash of the UTF-8 bytes; stable across platforms and runs."""
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * 0x100000001B3) & _MASK64
    return h


class SplitMix64:
    """Counter-based PRNG: the i-th output is mix64(seed + i * gamma)."""

    def __init__(self, seed: int) -> None:
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _SPLITMIX_GAMMA) & _MASK64
        return mix64(self._state)

    def next_float(self) -> float:
        """Uniform in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * 2.0**-53


def derive_seed(seed: int, seg_id: str, sample_index: int) -> int:
    """Per-sample seed from (run seed, segment key, sample index)."""
    return mix64(mix64((seed & _MASK64) ^ fnv1a64(seg_id)) ^ (sample_index & _MASK64))


@runtime_checkable
class TokenDistributionProvider(Protocol):
    """Next-token distribution source over a finite vocabulary.

    Implementations must be deterministic for identical inputs and safe to
    call from multiple workers concurrently (read-only after construction).
    """

    vocab: Sequence[str]
    eos_token: str
    max_len: int
    token_separator: str

    def next_distribution(self, prefix: Sequence[str], source: str) -> Sequence[float]:
        ...


@dataclass(frozen=True, slots=True)
class SamplingConfig:
    seed: int
    epsilon: float = 0.02
    num_samples: int = 256
    max_len: int | None = None

    def __post_init__(self) -> None:
        if not (0.0 <= self.epsilon < 1.0):
            raise ValueError(f"epsilon must be in [0, 1), got {self.epsilon}")
        if self.num_samples < 1:
            raise ValueError(f"num_samples must be >= 1, got {self.num_samples}")
        if self.max_len is not None and self.max_len < 1:
            raise ValueError(f"max_len must be >= 1, got {self.max_len}")


@dataclass(frozen=True, slots=True)
class BeamConfig:
    beam_size: int = 4
    alpha: float = 0.5
    max_len: int | None = None

    def __post_init__(self) -> None:
        if self.beam_size < 1:
            raise ValueError(f"beam_size must be >= 1, got {self.beam_size}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.max_len is not None and self.max_len < 1:
            raise ValueError(f"max_len must be >= 1, got {self.max_len}")


def epsilon_truncate(dist: Sequence[float], epsilon: float) -> list[float]:
    """Zero entries below epsilon and renormalize the survivors.

    If nothing survives, the argmax alone keeps probability 1 so the result is
    always a valid distribution.
    """
    total = 0.0
    best = 0
    for i, p in enumerate(dist):
        if p < 0:
            raise ValueError(f"negative probability {p} at index {i}")
        total += p
        if p > dist[best]:
            best = i
    if abs(total - 1.0) > 1e-6:
        raise ValueError(f"distribution sums to {total}, expected 1")
    survivor_mass = sum(p for p in dist if p >= epsilon)
    if survivor_mass <= 0.0:
        return [1.0 if i == best else 0.0 for i in range(len(dist))]
    return [p / survivor_mass if p >= epsilon else 0.0 for p in dist]


def length_penalty(length: int, alpha: float) -> float:
    """Length normalizer ((5 + length) / 6) ** alpha for beam hypothesis ranking."""
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    return ((5.0 + length) / 6.0) ** alpha


def _sample_index_from_cdf(probs: Sequence[float], u: float) -> int:
    acc = 0.0
    last_positive = 0
    for i, p in enumerate(probs):
        if p <= 0.0:
            continue
        acc += p
        last_positive = i
        if u < acc:
            return i
    return last_positive


def _sample_one(
    provider: TokenDistributionProvider,
    segment: Segment,
    epsilon: float,
    max_len: int,
    rng: SplitMix64,
    sample_index: int,
) -> Candidate:
    vocab = list(provider.vocab)
    tokens: list[str] = []
    logprob = 0.0
    truncated = True
    while len(tokens) < max_len:
        dist = provider.next_distribution(tokens, segment.source)
        probs = epsilon_truncate(dist, epsilon)
        idx = _sample_index_from_cdf(probs, rng.next_float())
        logprob += math.log(probs[idx])
        if vocab[idx] == provider.eos_token:
            truncated = False
            break
        tokens.append(vocab[idx])
    text = provider.token_separator.join(tokens)
    return Candidate(
        text=text,
        logprob=min(logprob, 0.0),
        sample_index=sample_index,
        truncated=truncated,
    )


def sample_candidates(
    provider: TokenDistributionProvider, segment: Segment, cfg: SamplingConfig
) -> CandidateSet:
    """Draw cfg.num_samples candidates by epsilon-truncated ancestral sampling.

    Logprobs record the post-truncation (renormalized) step probabilities.
    Candidates hitting max_len without end-of-sequence are kept and flagged so
    the candidate count stays exact; duplicates are permitted.
    """
    max_len = cfg.max_len or provider.max_len
    candidates = []
    for i in range(cfg.num_samples):
        rng = SplitMix64(derive_seed(cfg.seed, segment.seg_id, i))
        candidates.append(_sample_one(provider, segment, cfg.epsilon, max_len, rng, i))
    return CandidateSet(segment=segment, candidates=tuple(candidates))


def greedy_decode(
    provider: TokenDistributionProvider, segment: Segment, max_len: int | None = None
) -> Candidate:
    """Argmax token at each step until end-of-sequence or max_len (ties: lowest index)."""
    limit = max_len or provider.max_len
    vocab = list(provider.vocab)
    tokens: list[str] = []
    logprob = 0.0
    truncated = True
    while len(tokens) < limit:
        dist = provider.next_distribution(tokens, segment.source)
        best = max(range(len(dist)), key=lambda i: (dist[i], -i))
        logprob += math.log(dist[best])
        if vocab[best] == provider.eos_token:
            truncated = False
            break
        tokens.append(vocab[best])
    return Candidate(
        text=provider.token_separator.join(tokens),
        logprob=min(logprob, 0.0),
        sample_index=0,
        truncated=truncated,
    )


def beam_decode(
    provider: TokenDistributionProvider, segment: Segment, cfg: BeamConfig
) -> Candidate:
    """Beam search; finished hypotheses are ranked by logprob / length_penalty.

    The returned Candidate carries the raw sum-logprob of the winner. If no
    hypothesis finishes within max_len the best unfinished one is returned,
    flagged as truncated.
    """
    limit = cfg.max_len or provider.max_len
    vocab = list(provider.vocab)
    eos = provider.eos_token
    # Each hypothesis: (tokens tuple, raw sum-logprob). Hypotheses at the
    # length limit may only expand to end-of-sequence, so the search space is
    # exactly all sequences of 1..max_len tokens that finish.
    active: list[tuple[tuple[str, ...], float]] = [((), 0.0)]
    finished: list[tuple[tuple[str, ...], float]] = []
    fallback = active
    for step in range(limit + 1):
        if not active:
            break
        expansions: list[tuple[float, int, tuple[str, ...], int]] = []
        for order, (tokens, score) in enumerate(active):
            dist = provider.next_distribution(tokens, segment.source)
            for i, p in enumerate(dist):
                if p <= 0.0:
                    continue
                if step == limit and vocab[i] != eos:
                    continue
                expansions.append((score + math.log(p), order, tokens, i))
        # Stable order: score descending, then parent order, then token index,
        # so ties resolve identically regardless of scheduling.
        expansions.sort(key=lambda item: (-item[0], item[1], item[3]))
        next_active = []
        for score, _, tokens, token_idx in expansions[: cfg.beam_size]:
            if vocab[token_idx] == eos:
                finished.append((tokens, score))
            else:
                next_active.append((tokens + (vocab[token_idx],), score))
        if next_active:
            fallback = next_active
        active = next_active

    def penalized(item: tuple[tuple[str, ...], float]) -> float:
        tokens, score = item
        return score / length_penalty(max(len(tokens), 1), cfg.alpha)

    if finished:
        tokens, raw = max(enumerate(finished), key=lambda x: (penalized(x[1]), -x[0]))[1]
        truncated = False
    else:
        tokens, raw = max(enumerate(fallback), key=lambda x: (penalized(x[1]), -x[0]))[1]
        truncated = True
    return Candidate(
        text=provider.token_separator.join(tokens),
        logprob=min(raw, 0.0),
        sample_index=0,
        truncated=truncated,
    )


def penalized_score(candidate: Candidate, alpha: float, token_separator: str = "") -> float:
    """Length-normalized logprob of a decoded candidate."""
    if candidate.logprob is None:
        raise ValueError("candidate has no logprob")
    if token_separator:
        length = len(candidate.text.split(token_separator)) if candidate.text else 0
    else:
        length = len(candidate.text)
    return candidate.logprob / length_penalty(max(length, 1), alpha)


# ---------------------------------------------------------------------------
# Toy character-bigram provider.
#
# Transitions are conditioned on (source character aligned to the output
# position, previous output character) with add-one smoothing, which makes
# "translation" deterministic, dependency-free, and source-sensitive. The
# end-of-sequence token is suppressed at the first step so every output is
# non-empty.

_TOY_CORPUS: tuple[tuple[str, str], ...] = (
    ("hello", "hallo"),
    ("world", "welt"),
    ("cat", "katze"),
    ("dog", "hund"),
    ("house", "haus"),
    ("water", "wasser"),
    ("fire", "feuer"),
    ("sun", "sonne"),
    ("moon", "mond"),
    ("star", "stern"),
    ("tree", "baum"),
    ("fish", "fisch"),
    ("bread", "brot"),
    ("milk", "milch"),
    ("night", "nacht"),
    ("day", "tag"),
)


class BigramProvider:
    """Character-bigram toy model built from a small parallel corpus."""

    def __init__(
        self,
        vocab: Sequence[str],
        transitions: dict[str, dict[str, dict[str, int]]],
        max_len: int = 24,
        eos_token: str = DEFAULT_EOS_TOKEN,
    ) -> None:
        if eos_token not in vocab:
            raise ValueError("vocabulary must include the end-of-sequence token")
        self.vocab = tuple(vocab)
        self.eos_token = eos_token
        self.max_len = max_len
        self.token_separator = ""
        self._transitions = transitions
        self._eos_index = self.vocab.index(eos_token)

    @classmethod
    def from_corpus(
        cls, pairs: Sequence[tuple[str, str]], max_len: int = 24
    ) -> "BigramProvider":
        counts: dict[str, dict[str, dict[str, int]]] = defaultdict(
            lambda: defaultdict(lambda: defaultdict(int))
        )
        chars: set[str] = set()
        for source, target in pairs:
            chars.update(target)
            for pos in range(len(target) + 1):
                src_char = source[min(pos, len(source) - 1)] if source else BOS_TOKEN
                prev = target[pos - 1] if pos > 0 else BOS_TOKEN
                nxt = target[pos] if pos < len(target) else DEFAULT_EOS_TOKEN
                counts[src_char][prev][nxt] += 1
        vocab = sorted(chars) + [DEFAULT_EOS_TOKEN]
        transitions = {
            src: {prev: dict(row) for prev, row in by_prev.items()}
            for src, by_prev in counts.items()
        }
        return cls(vocab=vocab, transitions=transitions, max_len=max_len)

    @classmethod
    def from_file(cls, path: str) -> "BigramProvider":
        with open(path, encoding="utf-8") as handle:
            obj = json.load(handle)
        try:
            return cls(
                vocab=obj["vocabulary"],
                transitions=obj["transitions"],
                max_len=obj["max_len"],
                eos_token=obj.get("eos", DEFAULT_EOS_TOKEN),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise DataError(f"invalid provider model file {path}: {exc}") from exc

    def to_file(self, path: str) -> None:
        obj = {
            "vocabulary": list(self.vocab),
            "eos": self.eos_token,
            "max_len": self.max_len,
            "transitions": self._transitions,
        }
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(obj, handle, ensure_ascii=False, sort_keys=True)
            handle.write("\n")

    def next_distribution(self, prefix: Sequence[str], source: str) -> list[float]:
        pos = len(prefix)
        src_char = source[min(pos, len(source) - 1)] if source else BOS_TOKEN
        prev = prefix[-1] if prefix else BOS_TOKEN
        row = self._transitions.get(src_char, {}).get(prev, {})
        total = sum(row.values())
        denom = total + len(self.vocab)
        probs = [(row.get(token, 0) + 1) / denom for token in self.vocab]
        if not prefix:
            # Suppress end-of-sequence on the first step: outputs are non-empty.
            eos_mass = probs[self._eos_index]
            probs[self._eos_index] = 0.0
            remaining = 1.0 - eos_mass
            probs = [p / remaining for p in probs]
        return probs


def default_toy_provider(max_len: int = 24) -> BigramProvider:
    """The checked-in toy model used for deterministic end-to-end runs."""
    return BigramProvider.from_corpus(_TOY_CORPUS, max_len=max_len)


def toy_corpus() -> tuple[tuple[str, str], ...]:
    return _TOY_CORPUS
