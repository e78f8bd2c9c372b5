"""Dataset generation: run a decode method over sources, emit records + manifest.

Teachers participate either as a local token-distribution provider or as
pre-generated candidate files; the manifest records enough provenance
(method, utility, candidate size, seed, digests, round) to reproduce or audit
a finetuning dataset. Per-segment failures abort the job by default so a
dataset never silently shrinks.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import IO, Mapping, Sequence

from .core import (
    CandidateSet,
    DataError,
    DistillExample,
    MbrkitError,
    Segment,
    encode_distill_example,
)
from .mbr import mbr_select
from .metrics import Utility
from .qe import qe_select
from .sampling import (
    BeamConfig,
    SamplingConfig,
    TokenDistributionProvider,
    beam_decode,
    greedy_decode,
    penalized_score,
    sample_candidates,
)

DISTILL_METHODS = ("mbr", "qe", "beam", "greedy", "sample", "reference")
CANDIDATE_SOURCES = ("generate", "file")


@dataclass(frozen=True, slots=True)
class DistillJobConfig:
    method: str
    teacher_id: str
    utility: str | None = None
    sampling: SamplingConfig | None = None
    beam: BeamConfig | None = None
    candidate_source: str = "generate"
    include_self: bool = True
    skip_failed: bool = False

    def __post_init__(self) -> None:
        if self.method not in DISTILL_METHODS:
            raise ValueError(f"method must be one of {DISTILL_METHODS}, got {self.method!r}")
        if self.candidate_source not in CANDIDATE_SOURCES:
            raise ValueError(
                f"candidate_source must be one of {CANDIDATE_SOURCES}, "
                f"got {self.candidate_source!r}"
            )
        if not self.teacher_id:
            raise ValueError("teacher_id must be non-empty")
        if self.method in ("mbr", "qe") and not self.utility:
            raise ValueError(f"method={self.method} requires a utility")


@dataclass(frozen=True, slots=True)
class DatasetManifest:
    teacher_id: str
    method: str
    utility: str | None
    candidate_size: int | None
    epsilon: float | None
    seed: int | None
    source_digest: str
    dataset_digest: str
    record_count: int
    mean_score: float | None
    round: int = 1
    parent_digest: str | None = None
    skipped_seg_ids: tuple[str, ...] = ()

    def to_obj(self) -> dict:
        return {
            "teacher_id": self.teacher_id,
            "method": self.method,
            "utility": self.utility,
            "candidate_size": self.candidate_size,
            "epsilon": self.epsilon,
            "seed": self.seed,
            "round": self.round,
            "parent_digest": self.parent_digest,
            "source_digest": self.source_digest,
            "dataset_digest": self.dataset_digest,
            "record_count": self.record_count,
            "mean_score": self.mean_score,
            "skipped_seg_ids": list(self.skipped_seg_ids),
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "DatasetManifest":
        try:
            return cls(
                teacher_id=obj["teacher_id"],
                method=obj["method"],
                utility=obj.get("utility"),
                candidate_size=obj.get("candidate_size"),
                epsilon=obj.get("epsilon"),
                seed=obj.get("seed"),
                round=obj.get("round", 1),
                parent_digest=obj.get("parent_digest"),
                source_digest=obj["source_digest"],
                dataset_digest=obj["dataset_digest"],
                record_count=obj["record_count"],
                mean_score=obj.get("mean_score"),
                skipped_seg_ids=tuple(obj.get("skipped_seg_ids", [])),
            )
        except KeyError as exc:
            raise DataError(f"manifest missing field {exc.args[0]!r}") from exc


def write_manifest(manifest: DatasetManifest, stream: IO[str]) -> None:
    json.dump(manifest.to_obj(), stream, ensure_ascii=False, indent=2)
    stream.write("\n")


def read_manifest(stream: IO[str]) -> DatasetManifest:
    try:
        return DatasetManifest.from_obj(json.load(stream))
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed manifest: {exc}") from exc


def dataset_digest(examples: Sequence[DistillExample]) -> str:
    """sha256 of the exact bytes the JSONL writer emits for these records."""
    digest = hashlib.sha256()
    for example in examples:
        digest.update((encode_distill_example(example) + "\n").encode("utf-8"))
    return digest.hexdigest()


def source_digest(sources: Sequence[Segment]) -> str:
    digest = hashlib.sha256()
    for segment in sources:
        digest.update(f"{segment.seg_id}\t{segment.source}\n".encode("utf-8"))
    return digest.hexdigest()


def verify_manifest(manifest: DatasetManifest, dataset_path: str) -> bool:
    """Recompute the dataset file digest and compare with the manifest."""
    digest = hashlib.sha256()
    with open(dataset_path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest() == manifest.dataset_digest


def _select_target(
    segment: Segment,
    cfg: DistillJobConfig,
    candidate_set: CandidateSet | None,
    provider: TokenDistributionProvider | None,
    utility: Utility | None,
    batch_size: int | None,
) -> DistillExample:
    method = cfg.method
    if method == "reference":
        if not segment.reference:
            raise DataError(f"segment {segment.seg_id!r}: method=reference needs a reference")
        return DistillExample(
            seg_id=segment.seg_id,
            source=segment.source,
            target=segment.reference,
            method=method,
            score=None,
            teacher_id=cfg.teacher_id,
        )
    if method in ("beam", "greedy"):
        if provider is None:
            raise DataError(f"method={method} requires a provider")
        if method == "beam":
            beam_cfg = cfg.beam or BeamConfig()
            cand = beam_decode(provider, segment, beam_cfg)
            score = penalized_score(cand, beam_cfg.alpha, provider.token_separator)
        else:
            cand = greedy_decode(provider, segment)
            score = None
        return DistillExample(
            seg_id=segment.seg_id,
            source=segment.source,
            target=cand.text,
            method=method,
            score=score,
            teacher_id=cfg.teacher_id,
        )
    assert candidate_set is not None
    if method == "sample":
        return DistillExample(
            seg_id=segment.seg_id,
            source=segment.source,
            target=candidate_set.candidates[0].text,
            method=method,
            score=None,
            teacher_id=cfg.teacher_id,
        )
    assert utility is not None
    kwargs: dict = {}
    if batch_size is not None:
        kwargs["batch_size"] = batch_size
    if method == "mbr":
        selection = mbr_select(candidate_set, utility, cfg.include_self, **kwargs)
    else:
        selection = qe_select(candidate_set, utility, **kwargs)
    by_index = {cand.sample_index: cand for cand in candidate_set.candidates}
    return DistillExample(
        seg_id=segment.seg_id,
        source=segment.source,
        target=by_index[selection.chosen].text,
        method=method,
        score=selection.ranking[0][1],
        teacher_id=cfg.teacher_id,
    )


def generate_dataset(
    sources: Sequence[Segment],
    cfg: DistillJobConfig,
    *,
    candidates: Mapping[str, CandidateSet] | None = None,
    provider: TokenDistributionProvider | None = None,
    utility: Utility | None = None,
    workers: int = 1,
    batch_size: int | None = None,
    round_number: int = 1,
    parent_digest: str | None = None,
) -> tuple[list[DistillExample], DatasetManifest]:
    """Emit exactly one record per source segment, plus a populated manifest.

    mbr/qe/sample read candidates from `candidates` (candidate_source=file) or
    generate them with `provider` and cfg.sampling; beam/greedy always decode
    with the provider. Failures abort unless cfg.skip_failed, in which case
    the skipped seg_ids are listed in the manifest.
    """
    sources = list(sources)
    needs_candidates = cfg.method in ("mbr", "qe", "sample")
    if needs_candidates and cfg.candidate_source == "file":
        if candidates is None:
            raise DataError("candidate_source=file requires a candidates mapping")
        missing = [s.seg_id for s in sources if s.seg_id not in candidates]
        if missing:
            raise DataError(f"missing candidates for seg_ids: {missing[:10]}")
    if needs_candidates and cfg.candidate_source == "generate":
        if provider is None or cfg.sampling is None:
            raise DataError("candidate_source=generate requires a provider and sampling config")
    if cfg.method in ("mbr", "qe") and utility is None:
        raise DataError(f"method={cfg.method} requires a resolved utility")

    def candidate_set_for(segment: Segment) -> CandidateSet | None:
        if not needs_candidates:
            return None
        if cfg.candidate_source == "file":
            return candidates[segment.seg_id]
        sampling = cfg.sampling
        if cfg.method == "sample":
            sampling = replace(sampling, num_samples=1)
        return sample_candidates(provider, segment, sampling)

    def process(segment: Segment) -> tuple[DistillExample | None, str | None]:
        try:
            cs = candidate_set_for(segment)
            return _select_target(segment, cfg, cs, provider, utility, batch_size), None
        except MbrkitError as exc:
            if cfg.skip_failed:
                return None, segment.seg_id
            raise DataError(f"segment {segment.seg_id!r}: {exc}") from exc

    if workers > 1 and len(sources) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(process, sources))
    else:
        outcomes = [process(segment) for segment in sources]

    examples = [example for example, _ in outcomes if example is not None]
    skipped = tuple(seg_id for _, seg_id in outcomes if seg_id is not None)
    scores = [ex.score for ex in examples if ex.score is not None]
    if needs_candidates and cfg.method != "sample":
        if cfg.candidate_source == "file":
            sizes = {len(candidates[s.seg_id]) for s in sources if s.seg_id in candidates}
            candidate_size = max(sizes) if sizes else None
        else:
            candidate_size = cfg.sampling.num_samples
    else:
        candidate_size = None
    manifest = DatasetManifest(
        teacher_id=cfg.teacher_id,
        method=cfg.method,
        utility=cfg.utility,
        candidate_size=candidate_size,
        epsilon=cfg.sampling.epsilon if cfg.sampling else None,
        seed=cfg.sampling.seed if cfg.sampling else None,
        source_digest=source_digest(sources),
        dataset_digest=dataset_digest(examples),
        record_count=len(examples),
        mean_score=(math.fsum(scores) / len(scores)) if scores else None,
        round=round_number,
        parent_digest=parent_digest,
        skipped_seg_ids=skipped,
    )
    return examples, manifest


def iterate_round(
    prev_manifest: DatasetManifest,
    sources: Sequence[Segment],
    cfg: DistillJobConfig,
    *,
    candidates: Mapping[str, CandidateSet] | None = None,
    provider: TokenDistributionProvider | None = None,
    utility: Utility | None = None,
    workers: int = 1,
    batch_size: int | None = None,
) -> tuple[list[DistillExample], DatasetManifest]:
    """Next finetuning round: same generation, round bumped, parent linked.

    Callers bring the new round's candidates from their own finetuned model;
    nothing is retrained here.
    """
    if cfg.method not in ("mbr", "qe"):
        raise DataError(f"iterate_round requires method mbr or qe, got {cfg.method!r}")
    return generate_dataset(
        sources,
        cfg,
        candidates=candidates,
        provider=provider,
        utility=utility,
        workers=workers,
        batch_size=batch_size,
        round_number=prev_manifest.round + 1,
        parent_digest=prev_manifest.dataset_digest,
    )


def mix_datasets(
    datasets: Sequence[Sequence[DistillExample]], policy: str = "balanced"
) -> list[DistillExample]:
    """Combine datasets: balanced truncates to the smallest and interleaves
    round-robin; concat concatenates. Both are deterministic.
    """
    if policy not in ("balanced", "concat"):
        raise DataError(f"policy must be balanced or concat, got {policy!r}")
    datasets = [list(d) for d in datasets]
    if policy == "concat":
        return [example for dataset in datasets for example in dataset]
    if len(datasets) < 2:
        raise DataError("balanced mixing needs at least two datasets")
    if any(not dataset for dataset in datasets):
        raise DataError("balanced mixing requires non-empty datasets")
    limit = min(len(dataset) for dataset in datasets)
    return [dataset[i] for i in range(limit) for dataset in datasets]
