"""Evaluation and meta-evaluation: MQM aggregation, pairwise accuracies, reports.

MQM weights: major errors 5, minor errors 1, except minor punctuation errors
which weigh 0.1; major punctuation errors keep the full weight 5. Per-segment
scores average over annotators; lower is better. Sums use math.fsum so the
documented example values hold exactly.
"""

from __future__ import annotations

import json
import math
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Mapping, Sequence

from .core import DataError
from .metrics import BleuConfig, ChrfConfig, chrf, corpus_bleu, sentence_bleu

MAJOR_WEIGHT = 5.0
MINOR_WEIGHT = 1.0
MINOR_PUNCTUATION_WEIGHT = 0.1

SEVERITIES = ("major", "minor")


@dataclass(frozen=True, slots=True)
class MqmError:
    category: str
    severity: str
    is_punctuation: bool = False

    def __post_init__(self) -> None:
        if self.severity not in SEVERITIES:
            raise ValueError(f"severity must be one of {SEVERITIES}, got {self.severity!r}")

    @property
    def weight(self) -> float:
        if self.severity == "major":
            return MAJOR_WEIGHT
        return MINOR_PUNCTUATION_WEIGHT if self.is_punctuation else MINOR_WEIGHT


@dataclass(frozen=True, slots=True)
class MqmAnnotation:
    """One annotator's error list for one (seg_id, system)."""

    seg_id: str
    system: str
    annotator: str
    errors: tuple[MqmError, ...] = ()

    def __post_init__(self) -> None:
        if not isinstance(self.errors, tuple):
            object.__setattr__(self, "errors", tuple(self.errors))


def mqm_segment_score(annotations: Sequence[MqmAnnotation]) -> float:
    """Weighted error total per annotator, averaged over annotators."""
    if not annotations:
        raise DataError("mqm_segment_score needs at least one annotation")
    keys = {(a.seg_id, a.system) for a in annotations}
    if len(keys) != 1:
        raise DataError(f"annotations span multiple (seg_id, system) keys: {sorted(keys)}")
    annotators = [a.annotator for a in annotations]
    if len(set(annotators)) != len(annotators):
        raise DataError(f"duplicate annotator for {keys.pop()}")
    per_annotator = [math.fsum(err.weight for err in a.errors) for a in annotations]
    return math.fsum(per_annotator) / len(per_annotator)


def mqm_system_score(segment_scores: Sequence[float]) -> float:
    """Unweighted mean of segment scores."""
    if not segment_scores:
        raise DataError("mqm_system_score needs at least one segment score")
    return math.fsum(segment_scores) / len(segment_scores)


def read_mqm_annotations(stream: IO[str] | Iterable[str]) -> Iterator[MqmAnnotation]:
    seen: set[tuple[str, str, str]] = set()
    for line_no, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            errors = tuple(
                MqmError(
                    category=e["category"],
                    severity=e["severity"],
                    is_punctuation=bool(e.get("punctuation", False)),
                )
                for e in obj.get("errors", [])
            )
            ann = MqmAnnotation(
                seg_id=obj["seg_id"],
                system=obj["system"],
                annotator=obj["annotator"],
                errors=errors,
            )
        except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
            raise DataError(f"line {line_no}: {exc}") from exc
        key = (ann.seg_id, ann.system, ann.annotator)
        if key in seen:
            raise DataError(f"line {line_no}: duplicate annotation {key}")
        seen.add(key)
        yield ann


def mqm_report(annotations: Iterable[MqmAnnotation]) -> dict[str, float]:
    """System -> MQM score, from raw annotations (lower is better)."""
    by_key: dict[tuple[str, str], list[MqmAnnotation]] = defaultdict(list)
    for ann in annotations:
        by_key[(ann.system, ann.seg_id)].append(ann)
    by_system: dict[str, list[float]] = defaultdict(list)
    for (system, _), anns in sorted(by_key.items()):
        by_system[system].append(mqm_segment_score(anns))
    return {system: mqm_system_score(scores) for system, scores in sorted(by_system.items())}


# ---------------------------------------------------------------------------
# Meta-evaluation.


def _sign(delta: float, eps: float = 0.0) -> int:
    if abs(delta) <= eps:
        return 0
    return 1 if delta > 0 else -1


def system_pairwise_accuracy(
    gold: Mapping[str, float], metric: Mapping[str, float]
) -> float:
    """Percentage of system pairs ranked the same way by metric and gold.

    Gold ties are excluded from the denominator; a metric tie on a non-tied
    gold pair counts as incorrect.
    """
    names = sorted(gold)
    if len(names) < 2:
        raise DataError("system_pairwise_accuracy needs at least two systems")
    if set(metric) != set(gold):
        raise DataError("gold and metric must cover the same systems")
    correct = 0
    total = 0
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            gold_sign = _sign(gold[names[i]] - gold[names[j]])
            if gold_sign == 0:
                continue
            total += 1
            if _sign(metric[names[i]] - metric[names[j]]) == gold_sign:
                correct += 1
    if total == 0:
        raise DataError("all gold pairs are tied; accuracy undefined")
    return 100.0 * correct / total


@dataclass(frozen=True, slots=True)
class MetaEvalInput:
    """Per-segment gold and metric scores for multiple systems.

    Both mappings are seg_id -> system -> score and must cover the same
    (seg_id, system) grid.
    """

    gold: Mapping[str, Mapping[str, float]]
    metric: Mapping[str, Mapping[str, float]]

    def __post_init__(self) -> None:
        if set(self.gold) != set(self.metric):
            raise DataError("gold and metric must cover the same segments")
        for seg_id in self.gold:
            if set(self.gold[seg_id]) != set(self.metric[seg_id]):
                raise DataError(
                    f"segment {seg_id!r}: gold and metric must cover the same systems"
                )


def segment_pairwise_accuracy_grouped(
    data: MetaEvalInput, tie_eps: float = 0.0
) -> float:
    """Group-by-item pairwise accuracy with three-way tie matching, in [0, 100].

    For every segment and every unordered system pair, gold and metric deltas
    are each classified as {<, =, >} (gold ties exactly, metric ties within
    tie_eps); the pair is correct iff the classes match. Per-segment accuracy
    is averaged across segments, so a metric classifying pairs uniformly at
    random over the three classes scores 33.3 on tie-free gold.
    """
    per_segment: list[float] = []
    for seg_id in sorted(data.gold):
        systems = sorted(data.gold[seg_id])
        if len(systems) < 2:
            warnings.warn(
                f"segment {seg_id!r} has fewer than two systems; excluded",
                stacklevel=2,
            )
            continue
        correct = 0
        total = 0
        for i in range(len(systems)):
            for j in range(i + 1, len(systems)):
                gold_sign = _sign(data.gold[seg_id][systems[i]] - data.gold[seg_id][systems[j]])
                metric_sign = _sign(
                    data.metric[seg_id][systems[i]] - data.metric[seg_id][systems[j]],
                    eps=tie_eps,
                )
                total += 1
                if gold_sign == metric_sign:
                    correct += 1
        per_segment.append(correct / total)
    if not per_segment:
        raise DataError("no segment had two or more systems")
    return 100.0 * math.fsum(per_segment) / len(per_segment)


# ---------------------------------------------------------------------------
# Metric reports and score histograms.

REPORT_METRICS = ("chrf", "sentence_bleu", "corpus_bleu")


@dataclass(slots=True)
class ScoreReport:
    """Per-system metric table plus any metric resolution failures."""

    scores: dict[str, dict[str, float]]
    errors: dict[str, str] = field(default_factory=dict)

    def to_obj(self) -> dict:
        from .core import quantize_score

        return {
            "systems": {
                name: {metric: quantize_score(v) for metric, v in row.items()}
                for name, row in sorted(self.scores.items())
            },
            "errors": dict(sorted(self.errors.items())),
        }

    def to_table(self) -> str:
        systems = sorted(self.scores)
        metrics = sorted({m for row in self.scores.values() for m in row})
        name_width = max([len("system")] + [len(s) for s in systems])
        col_width = max([10] + [len(m) for m in metrics]) + 2
        lines = [
            "system".ljust(name_width)
            + "".join(m.rjust(col_width) for m in metrics)
        ]
        for name in systems:
            row = self.scores[name]
            cells = "".join(
                (f"{row[m]:.3f}" if m in row else "-").rjust(col_width) for m in metrics
            )
            lines.append(name.ljust(name_width) + cells)
        return "\n".join(lines)


def _external_system_score(
    utility,
    outputs: Mapping[str, str],
    references: Mapping[str, str],
    sources: Mapping[str, str] | None,
    ordered_ids: Sequence[str],
) -> float:
    rows = [
        (
            (sources or {}).get(seg_id, ""),
            outputs[seg_id],
            references[seg_id],
        )
        for seg_id in ordered_ids
    ]
    scores = utility.score_rows(rows)
    return math.fsum(scores) / len(scores)


def score_report(
    systems: Mapping[str, Mapping[str, str]],
    references: Mapping[str, str],
    metric_names: Sequence[str],
    sources: Mapping[str, str] | None = None,
) -> ScoreReport:
    """Score each system's outputs against shared references.

    chrf and sentence_bleu report the mean of segment-level scores;
    corpus_bleu reports the pooled corpus score. Any other name is resolved
    through the utility registry (external scorers report the mean segment
    score; reference-free ones need per-segment sources). Unresolvable
    metrics are recorded in the report errors and the rest still compute.
    """
    report = ScoreReport(scores={name: {} for name in systems})
    ref_ids = set(references)
    for name, outputs in systems.items():
        if set(outputs) != ref_ids:
            raise DataError(f"system {name!r} seg_ids do not match the references")
    ordered_ids = sorted(ref_ids)
    for metric in metric_names:
        if metric not in REPORT_METRICS:
            from .core import REFERENCE_FREE, MbrkitError
            from .metrics import resolve_utility

            try:
                utility = resolve_utility(metric)
                if utility.kind == REFERENCE_FREE and sources is None:
                    raise DataError(
                        f"reference-free metric {metric!r} needs per-segment sources"
                    )
                for name, outputs in systems.items():
                    report.scores[name][metric] = _external_system_score(
                        utility, outputs, references, sources, ordered_ids
                    )
            except MbrkitError as exc:
                report.errors[metric] = str(exc)
            continue
        for name, outputs in systems.items():
            pairs = [(outputs[seg_id], references[seg_id]) for seg_id in ordered_ids]
            if metric == "chrf":
                cfg = ChrfConfig()
                value = math.fsum(chrf(h, r, cfg) for h, r in pairs) / len(pairs)
            elif metric == "sentence_bleu":
                cfg_b = BleuConfig()
                value = math.fsum(sentence_bleu(h, r, cfg_b) for h, r in pairs) / len(pairs)
            else:
                value = corpus_bleu(pairs)
            report.scores[name][metric] = value
    return report


def histogram(
    values: Sequence[float], bins: int = 20, lo: float | None = None, hi: float | None = None
) -> list[tuple[float, float, int]]:
    """Fixed-width bins as (low, high, count); the top bin is right-closed."""
    if not values:
        raise DataError("histogram needs at least one value")
    if bins < 1:
        raise DataError("bins must be >= 1")
    lo = min(values) if lo is None else lo
    hi = max(values) if hi is None else hi
    if hi <= lo:
        hi = lo + 1.0
    width = (hi - lo) / bins
    counts = [0] * bins
    for v in values:
        idx = int((v - lo) / width)
        idx = min(max(idx, 0), bins - 1)
        counts[idx] += 1
    return [(lo + i * width, lo + (i + 1) * width, counts[i]) for i in range(bins)]


def histogram_csv(rows: Sequence[tuple[float, float, int]]) -> str:
    lines = ["bin_low,bin_high,count"]
    for low, high, count in rows:
        lines.append(f"{low:.6f},{high:.6f},{count}")
    return "\n".join(lines) + "\n"
