"""Corpus hygiene: length and ratio filters plus exact deduplication.

Tokens are whitespace-delimited units. The ratio rule defaults to the
symmetric max/min reading; a strict source/target direction is available via
the config flag. Filtering is idempotent and preserves input order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

RULE_SOURCE_LENGTH = "source_length"
RULE_LENGTH_RATIO = "length_ratio"
RULE_DUPLICATE = "duplicate"
RULE_CLASSIFIER = "classifier"

DEDUP_MODES = ("none", "exact_pair", "exact_source")


@dataclass(frozen=True, slots=True)
class FilterConfig:
    max_source_tokens: int = 250
    max_length_ratio: float = 1.5
    dedup: str = "none"
    symmetric_ratio: bool = True

    def __post_init__(self) -> None:
        if self.max_source_tokens < 1:
            raise ValueError("max_source_tokens must be >= 1")
        if self.max_length_ratio <= 0:
            raise ValueError("max_length_ratio must be > 0")
        if self.dedup not in DEDUP_MODES:
            raise ValueError(f"dedup must be one of {DEDUP_MODES}, got {self.dedup!r}")


@dataclass(slots=True)
class FilterReport:
    kept: int = 0
    dropped_by_rule: dict[str, int] = field(default_factory=dict)

    def drop(self, rule: str) -> None:
        self.dropped_by_rule[rule] = self.dropped_by_rule.get(rule, 0) + 1

    @property
    def dropped(self) -> int:
        return sum(self.dropped_by_rule.values())

    def to_obj(self) -> dict:
        return {"kept": self.kept, "dropped_by_rule": dict(sorted(self.dropped_by_rule.items()))}


def _ratio_exceeded(len_src: int, len_tgt: int, cfg: FilterConfig) -> bool:
    if cfg.symmetric_ratio:
        lo, hi = min(len_src, len_tgt), max(len_src, len_tgt)
    else:
        lo, hi = len_tgt, len_src
    if hi == 0 and lo == 0:
        return False
    if lo == 0:
        return True
    return hi / lo > cfg.max_length_ratio


def filter_pairs(
    pairs: Iterable[tuple[str, str]],
    cfg: FilterConfig | None = None,
    keep_fn: Callable[[str, str], bool] | None = None,
) -> tuple[list[tuple[str, str]], FilterReport]:
    """Apply length, ratio, classifier, and dedup rules; first occurrence wins.

    Every dropped pair is accounted to exactly one rule, checked in order:
    source length, length ratio, the optional pass-through classifier
    (language-id or similar external models plug in here), then duplicates
    among survivors.
    """
    cfg = cfg or FilterConfig()
    kept: list[tuple[str, str]] = []
    report = FilterReport()
    seen: set[tuple[str, str] | str] = set()
    for source, target in pairs:
        len_src = len(source.split())
        len_tgt = len(target.split())
        if len_src > cfg.max_source_tokens:
            report.drop(RULE_SOURCE_LENGTH)
            continue
        if _ratio_exceeded(len_src, len_tgt, cfg):
            report.drop(RULE_LENGTH_RATIO)
            continue
        if keep_fn is not None and not keep_fn(source, target):
            report.drop(RULE_CLASSIFIER)
            continue
        if cfg.dedup != "none":
            key: tuple[str, str] | str = (source, target) if cfg.dedup == "exact_pair" else source
            if key in seen:
                report.drop(RULE_DUPLICATE)
                continue
            seen.add(key)
        kept.append((source, target))
    report.kept = len(kept)
    return kept, report


def dedup_monolingual(lines: Iterable[str]) -> list[str]:
    """Exact-match dedup preserving first occurrence and order."""
    seen: set[str] = set()
    out: list[str] = []
    for line in lines:
        if line in seen:
            continue
        seen.add(line)
        out.append(line)
    return out


class CommandClassifier:
    """Pass-through hook running an external keep/drop classifier command.

    The command receives one "source<TAB>target" line per pair on stdin and
    must answer one line per pair on stdout: "1" or "keep" keeps the pair,
    anything else drops it. Tabs and newlines inside the text are collapsed
    to spaces before they go over the pipe.
    """

    def __init__(self, command: str | Sequence[str]) -> None:
        import shlex
        import subprocess

        argv = shlex.split(command) if isinstance(command, str) else list(command)
        self._proc = subprocess.Popen(
            argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            text=True, encoding="utf-8",
        )

    def __call__(self, source: str, target: str) -> bool:
        flat_src = " ".join(source.split())
        flat_tgt = " ".join(target.split())
        assert self._proc.stdin is not None and self._proc.stdout is not None
        self._proc.stdin.write(f"{flat_src}\t{flat_tgt}\n")
        self._proc.stdin.flush()
        answer = self._proc.stdout.readline().strip().lower()
        return answer in ("1", "keep", "true", "yes")

    def close(self) -> None:
        if self._proc.stdin is not None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
        self._proc.wait(timeout=10)

    def __enter__(self) -> "CommandClassifier":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()
