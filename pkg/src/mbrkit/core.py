"""Shared domain types and canonical JSONL serialization for the pipeline.

All types are immutable after construction and safe to share across workers.
Score-like fields are quantized to six fractional digits when serialized so
golden files stay stable; in-memory values keep full precision.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO, Iterable, Iterator

SELECTION_METHODS = ("mbr", "qe", "beam", "greedy", "sample", "reference")

REFERENCE_BASED = "reference_based"
REFERENCE_FREE = "reference_free"
UTILITY_KINDS = (REFERENCE_BASED, REFERENCE_FREE)
UTILITY_BACKENDS = ("builtin_chrf", "builtin_sentence_bleu", "external")


class MbrkitError(Exception):
    """Base class for all toolkit errors."""


class DataError(MbrkitError):
    """Invalid input data: malformed records, broken invariants, bad files."""


@dataclass(frozen=True, slots=True)
class Segment:
    """A source segment, optionally with a reference translation."""

    seg_id: str
    source: str
    reference: str | None = None
    domain_tag: str | None = None

    def __post_init__(self) -> None:
        if not self.seg_id:
            raise ValueError("seg_id must be non-empty")
        if not self.source:
            raise ValueError(f"segment {self.seg_id!r}: source must be non-empty")


@dataclass(frozen=True, slots=True)
class Candidate:
    """One sampled or decoded hypothesis for a segment."""

    text: str
    logprob: float | None = None
    sample_index: int = 0
    truncated: bool = False

    def __post_init__(self) -> None:
        if self.sample_index < 0:
            raise ValueError(f"sample_index must be >= 0, got {self.sample_index}")
        if self.logprob is not None and self.logprob > 0:
            raise ValueError(f"logprob must be <= 0, got {self.logprob}")


@dataclass(frozen=True, slots=True)
class CandidateSet:
    """A segment plus its hypotheses, in sampling order."""

    segment: Segment
    candidates: tuple[Candidate, ...]

    def __post_init__(self) -> None:
        if not isinstance(self.candidates, tuple):
            object.__setattr__(self, "candidates", tuple(self.candidates))
        if not self.candidates:
            raise ValueError(f"segment {self.segment.seg_id!r}: candidate list is empty")
        seen: set[int] = set()
        for cand in self.candidates:
            if cand.sample_index in seen:
                raise ValueError(
                    f"segment {self.segment.seg_id!r}: duplicate sample_index "
                    f"{cand.sample_index}"
                )
            seen.add(cand.sample_index)

    def __len__(self) -> int:
        return len(self.candidates)


@dataclass(frozen=True, slots=True)
class UtilityFunction:
    """Descriptor for a utility metric: what it scores against and where it runs."""

    name: str
    kind: str
    backend: str
    endpoint: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in UTILITY_KINDS:
            raise ValueError(f"kind must be one of {UTILITY_KINDS}, got {self.kind!r}")
        if self.backend not in UTILITY_BACKENDS:
            raise ValueError(
                f"backend must be one of {UTILITY_BACKENDS}, got {self.backend!r}"
            )
        if self.backend == "external" and not self.endpoint:
            raise ValueError(f"utility {self.name!r}: external backend requires an endpoint")


@dataclass(frozen=True, slots=True)
class SelectionResult:
    """Ranked candidates for one segment under MBR or QE scoring."""

    seg_id: str
    method: str
    ranking: tuple[tuple[int, float], ...]
    chosen: int
    utility_calls: int

    def __post_init__(self) -> None:
        if self.method not in ("mbr", "qe"):
            raise ValueError(f"selection method must be mbr or qe, got {self.method!r}")
        if not isinstance(self.ranking, tuple):
            object.__setattr__(self, "ranking", tuple(tuple(item) for item in self.ranking))
        if not self.ranking:
            raise ValueError(f"segment {self.seg_id!r}: empty ranking")
        if self.chosen != self.ranking[0][0]:
            raise ValueError(
                f"segment {self.seg_id!r}: chosen={self.chosen} does not match "
                f"top of ranking ({self.ranking[0][0]})"
            )
        if self.utility_calls < 0:
            raise ValueError("utility_calls must be >= 0")


@dataclass(frozen=True, slots=True)
class DistillExample:
    """One (source, selected target) record for finetuning."""

    seg_id: str
    source: str
    target: str
    method: str
    score: float | None = None
    teacher_id: str = ""

    def __post_init__(self) -> None:
        if not self.target:
            raise ValueError(f"segment {self.seg_id!r}: target must be non-empty")
        if self.method not in SELECTION_METHODS:
            raise ValueError(
                f"method must be one of {SELECTION_METHODS}, got {self.method!r}"
            )
        if self.method == "reference" and self.score is not None:
            raise ValueError(
                f"segment {self.seg_id!r}: method=reference must not carry a score"
            )


def quantize_score(value: float | None) -> float | None:
    """Quantize a score to the six fractional digits used on the wire."""
    if value is None:
        return None
    return round(float(value), 6)


def _dump(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(", ", ": "))


# ---------------------------------------------------------------------------
# Candidate files: one JSON object per segment.


def candidate_set_to_obj(cs: CandidateSet) -> dict:
    cands = []
    for pos, cand in enumerate(cs.candidates):
        item: dict = {"text": cand.text, "logprob": cand.logprob}
        if cand.sample_index != pos:
            item["sample_index"] = cand.sample_index
        if cand.truncated:
            item["truncated"] = True
        cands.append(item)
    return {
        "seg_id": cs.segment.seg_id,
        "source": cs.segment.source,
        "reference": cs.segment.reference,
        "domain": cs.segment.domain_tag,
        "candidates": cands,
    }


def candidate_set_from_obj(obj: dict) -> CandidateSet:
    if not isinstance(obj, dict):
        raise ValueError("expected a JSON object")
    try:
        segment = Segment(
            seg_id=obj["seg_id"],
            source=obj["source"],
            reference=obj.get("reference"),
            domain_tag=obj.get("domain"),
        )
        raw = obj["candidates"]
    except KeyError as exc:
        raise ValueError(f"missing field {exc.args[0]!r}") from exc
    candidates = []
    for pos, item in enumerate(raw):
        candidates.append(
            Candidate(
                text=item["text"],
                logprob=item.get("logprob"),
                sample_index=item.get("sample_index", pos),
                truncated=bool(item.get("truncated", False)),
            )
        )
    return CandidateSet(segment=segment, candidates=tuple(candidates))


def encode_candidate_set(cs: CandidateSet) -> str:
    return _dump(candidate_set_to_obj(cs))


def read_candidates(stream: IO[str] | Iterable[str]) -> Iterator[CandidateSet]:
    """Parse a candidate JSONL stream, preserving order.

    Raises DataError with the 1-based line number on malformed JSON or broken
    invariants, and names the key on duplicate seg_ids.
    """
    seen_ids: set[str] = set()
    for line_no, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"line {line_no}: malformed JSON: {exc}") from exc
        try:
            cs = candidate_set_from_obj(obj)
        except (ValueError, TypeError) as exc:
            raise DataError(f"line {line_no}: {exc}") from exc
        if cs.segment.seg_id in seen_ids:
            raise DataError(f"line {line_no}: duplicate seg_id {cs.segment.seg_id!r}")
        seen_ids.add(cs.segment.seg_id)
        yield cs


def write_candidates(sets: Iterable[CandidateSet], stream: IO[str]) -> int:
    count = 0
    offset = 0
    for cs in sets:
        line = encode_candidate_set(cs) + "\n"
        try:
            stream.write(line)
        except OSError as exc:
            raise DataError(f"write failed at byte offset {offset}: {exc}") from exc
        offset += len(line.encode("utf-8"))
        count += 1
    return count


# ---------------------------------------------------------------------------
# Distill files: one JSON object per example, fixed key order.


def distill_example_to_obj(example: DistillExample) -> dict:
    return {
        "seg_id": example.seg_id,
        "source": example.source,
        "target": example.target,
        "method": example.method,
        "score": quantize_score(example.score),
        "teacher_id": example.teacher_id,
    }


def distill_example_from_obj(obj: dict) -> DistillExample:
    if not isinstance(obj, dict):
        raise ValueError("expected a JSON object")
    try:
        return DistillExample(
            seg_id=obj["seg_id"],
            source=obj["source"],
            target=obj["target"],
            method=obj["method"],
            score=obj.get("score"),
            teacher_id=obj["teacher_id"],
        )
    except KeyError as exc:
        raise ValueError(f"missing field {exc.args[0]!r}") from exc


def encode_distill_example(example: DistillExample) -> str:
    return _dump(distill_example_to_obj(example))


def read_distill_dataset(stream: IO[str] | Iterable[str]) -> Iterator[DistillExample]:
    for line_no, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"line {line_no}: malformed JSON: {exc}") from exc
        try:
            yield distill_example_from_obj(obj)
        except (ValueError, TypeError) as exc:
            raise DataError(f"line {line_no}: {exc}") from exc


def write_distill_dataset(examples: Iterable[DistillExample], stream: IO[str]) -> int:
    """Write one JSON object per line; returns the number of records written."""
    count = 0
    offset = 0
    for example in examples:
        line = encode_distill_example(example) + "\n"
        try:
            stream.write(line)
        except OSError as exc:
            raise DataError(f"write failed at byte offset {offset}: {exc}") from exc
        offset += len(line.encode("utf-8"))
        count += 1
    return count


# ---------------------------------------------------------------------------
# Selection files.


def selection_to_obj(sel: SelectionResult) -> dict:
    return {
        "seg_id": sel.seg_id,
        "method": sel.method,
        "chosen": sel.chosen,
        "utility_calls": sel.utility_calls,
        "ranking": [[idx, quantize_score(score)] for idx, score in sel.ranking],
    }


def selection_from_obj(obj: dict) -> SelectionResult:
    try:
        return SelectionResult(
            seg_id=obj["seg_id"],
            method=obj["method"],
            ranking=tuple((int(i), float(s)) for i, s in obj["ranking"]),
            chosen=obj["chosen"],
            utility_calls=obj["utility_calls"],
        )
    except KeyError as exc:
        raise ValueError(f"missing field {exc.args[0]!r}") from exc


def encode_selection(sel: SelectionResult) -> str:
    return _dump(selection_to_obj(sel))


def read_segments(stream: IO[str] | Iterable[str]) -> Iterator[Segment]:
    """Read sources as Segment JSONL or plain lines (seg_id synthesized by position)."""
    for line_no, line in enumerate(stream, start=1):
        text = line.rstrip("\n")
        if not text.strip():
            continue
        if text.lstrip().startswith("{"):
            try:
                obj = json.loads(text)
                yield Segment(
                    seg_id=obj["seg_id"],
                    source=obj["source"],
                    reference=obj.get("reference"),
                    domain_tag=obj.get("domain"),
                )
            except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
                raise DataError(f"line {line_no}: {exc}") from exc
        else:
            yield Segment(seg_id=f"s{line_no:06d}", source=text)
