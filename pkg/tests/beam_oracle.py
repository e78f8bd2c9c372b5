"""Brute-force search oracle for beam decoding over tiny vocabularies.

Enumerates every token sequence up to max_len that ends in end-of-sequence and
ranks it by the same length-normalized score the decoder uses. Independent of
the decoder implementation: plain product iteration, no shared search code.
"""

from __future__ import annotations

import itertools
import math

from mbrkit.sampling import TokenDistributionProvider, length_penalty


def exhaustive_best(
    provider: TokenDistributionProvider, source: str, alpha: float, max_len: int
) -> tuple[str, float]:
    """Return (text, penalized score) of the best finishable sequence."""
    vocab = list(provider.vocab)
    eos = provider.eos_token
    tokens = [t for t in vocab if t != eos]
    best: tuple[float, str] | None = None
    for length in range(1, max_len + 1):
        for combo in itertools.product(tokens, repeat=length):
            logprob = 0.0
            feasible = True
            for step, token in enumerate(combo):
                dist = provider.next_distribution(combo[:step], source)
                p = dist[vocab.index(token)]
                if p <= 0.0:
                    feasible = False
                    break
                logprob += math.log(p)
            if not feasible:
                continue
            dist = provider.next_distribution(combo, source)
            p_end = dist[vocab.index(eos)]
            if p_end <= 0.0:
                continue
            logprob += math.log(p_end)
            score = logprob / length_penalty(length, alpha)
            text = provider.token_separator.join(combo)
            if best is None or score > best[0] or (score == best[0] and text < best[1]):
                best = (score, text)
    assert best is not None, "no sequence can finish; oracle misuse"
    return best[1], best[0]


def random_table_provider(seed: int, vocab_size: int, max_len: int) -> "TableProvider":
    """Random provider over a tiny vocabulary; end-of-sequence is impossible at
    step 0 and has positive probability everywhere else."""
    import random

    rng = random.Random(seed)
    letters = ["a", "b", "c", "d"][: vocab_size - 1]
    vocab = letters + ["</s>"]
    rows: dict[tuple[str, int], list[float]] = {}
    for pos in range(max_len + 1):
        for last in [""] + letters:
            raw = [rng.uniform(0.05, 1.0) for _ in vocab]
            if pos == 0:
                raw[-1] = 0.0
            total = sum(raw)
            rows[(last, pos)] = [p / total for p in raw]
    return TableProvider(
        vocab=vocab, rows=rows, default_row=rows[("", max_len)], max_len=max_len
    )


class TableProvider:
    """Provider backed by an explicit (prefix-suffix, position) -> row table."""

    def __init__(
        self,
        vocab: list[str],
        rows: dict[tuple[str, int], list[float]],
        default_row: list[float],
        max_len: int,
        token_separator: str = "",
    ) -> None:
        self.vocab = tuple(vocab)
        self.eos_token = vocab[-1]
        self.max_len = max_len
        self.token_separator = token_separator
        self._rows = rows
        self._default = default_row

    def next_distribution(self, prefix, source):  # noqa: ANN001 - protocol signature
        last = prefix[-1] if prefix else ""
        return list(self._rows.get((last, len(prefix)), self._default))
