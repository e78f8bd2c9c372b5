from __future__ import annotations

import io

import pytest

from mbrkit.core import (
    DataError,
    DistillExample,
    Segment,
    write_distill_dataset,
)
from mbrkit.distill import (
    DatasetManifest,
    DistillJobConfig,
    dataset_digest,
    generate_dataset,
    iterate_round,
    mix_datasets,
    read_manifest,
    verify_manifest,
    write_manifest,
)
from mbrkit.mbr import mbr_select
from mbrkit.metrics import Utility, resolve_utility
from mbrkit.qe import qe_select
from mbrkit.sampling import (
    BeamConfig,
    SamplingConfig,
    beam_decode,
    default_toy_provider,
    greedy_decode,
    sample_candidates,
)

PROVIDER = default_toy_provider()
WORDS = ["hello", "water", "night", "star", "fish"]
SOURCES = [Segment(seg_id=f"s{i}", source=w, reference=w) for i, w in enumerate(WORDS)]


def job(method: str, **kwargs) -> DistillJobConfig:
    defaults = dict(
        method=method,
        teacher_id="toy-teacher",
        utility="chrf" if method == "mbr" else ("chrf_qe" if method == "qe" else None),
        sampling=SamplingConfig(seed=11, num_samples=6),
        candidate_source="generate",
    )
    defaults.update(kwargs)
    return DistillJobConfig(**defaults)


def test_greedy_dataset_matches_decoder_outputs() -> None:
    examples, manifest = generate_dataset(SOURCES, job("greedy"), provider=PROVIDER)
    assert len(examples) == len(SOURCES)
    for seg, ex in zip(SOURCES, examples):
        assert ex.target == greedy_decode(PROVIDER, seg).text
        assert ex.score is None
        assert ex.teacher_id == "toy-teacher"
    assert manifest.record_count == len(SOURCES)
    assert manifest.mean_score is None


def test_beam_dataset_carries_penalized_score() -> None:
    examples, _ = generate_dataset(
        SOURCES, job("beam", beam=BeamConfig()), provider=PROVIDER
    )
    for seg, ex in zip(SOURCES, examples):
        cand = beam_decode(PROVIDER, seg, BeamConfig())
        assert ex.target == cand.text
        assert ex.score is not None and ex.score <= 0.0


def test_mbr_dataset_matches_per_segment_selection() -> None:
    utility = resolve_utility("chrf")
    examples, manifest = generate_dataset(
        SOURCES, job("mbr"), provider=PROVIDER, utility=utility
    )
    for seg, ex in zip(SOURCES, examples):
        cs = sample_candidates(PROVIDER, seg, SamplingConfig(seed=11, num_samples=6))
        sel = mbr_select(cs, utility)
        assert ex.target == cs.candidates[sel.chosen].text
        assert ex.score == pytest.approx(sel.ranking[0][1])
        assert ex.target in {c.text for c in cs.candidates}
    assert manifest.candidate_size == 6
    assert manifest.epsilon == 0.02
    assert manifest.seed == 11
    assert manifest.mean_score is not None


def test_qe_dataset_from_candidate_file() -> None:
    utility = resolve_utility("chrf_qe")
    candidate_map = {
        seg.seg_id: sample_candidates(PROVIDER, seg, SamplingConfig(seed=3, num_samples=5))
        for seg in SOURCES
    }
    cfg = job("qe", candidate_source="file", sampling=None)
    examples, manifest = generate_dataset(
        SOURCES, cfg, candidates=candidate_map, utility=utility
    )
    for seg, ex in zip(SOURCES, examples):
        sel = qe_select(candidate_map[seg.seg_id], utility)
        assert ex.target == candidate_map[seg.seg_id].candidates[sel.chosen].text
    assert manifest.candidate_size == 5
    assert manifest.seed is None


def test_reference_method_copies_references() -> None:
    examples, _ = generate_dataset(SOURCES, job("reference", utility=None, sampling=None))
    for seg, ex in zip(SOURCES, examples):
        assert ex.target == seg.reference
        assert ex.score is None


def test_reference_method_requires_references() -> None:
    bare = [Segment(seg_id="x", source="hello")]
    with pytest.raises(DataError, match="reference"):
        generate_dataset(bare, job("reference", utility=None, sampling=None))


def test_missing_candidates_error() -> None:
    cfg = job("qe", candidate_source="file", sampling=None)
    with pytest.raises(DataError, match="missing candidates"):
        generate_dataset(SOURCES, cfg, candidates={}, utility=resolve_utility("chrf_qe"))


def test_failures_abort_by_default_and_skip_when_asked() -> None:
    def explode(h: str, s: str) -> float:
        if "water" in s:
            raise RuntimeError("scorer down")
        return float(len(h))

    utility = Utility("boom", "reference_free", pair_fn=explode)
    with pytest.raises(DataError, match="s1"):
        generate_dataset(SOURCES, job("qe"), provider=PROVIDER, utility=utility)
    examples, manifest = generate_dataset(
        SOURCES, job("qe", skip_failed=True), provider=PROVIDER, utility=utility
    )
    assert len(examples) == len(SOURCES) - 1
    assert manifest.skipped_seg_ids == ("s1",)
    assert manifest.record_count == len(SOURCES) - 1


def test_parallel_workers_keep_input_order_and_results() -> None:
    utility = resolve_utility("chrf")
    serial = generate_dataset(SOURCES, job("mbr"), provider=PROVIDER, utility=utility, workers=1)
    parallel = generate_dataset(SOURCES, job("mbr"), provider=PROVIDER, utility=utility, workers=8)
    assert serial[0] == parallel[0]
    assert serial[1] == parallel[1]


def test_manifest_digest_verifies_written_file(tmp_path) -> None:
    utility = resolve_utility("chrf")
    examples, manifest = generate_dataset(
        SOURCES, job("mbr"), provider=PROVIDER, utility=utility
    )
    path = tmp_path / "data.jsonl"
    with open(path, "w", encoding="utf-8") as handle:
        write_distill_dataset(examples, handle)
    assert verify_manifest(manifest, str(path))
    with open(path, "a", encoding="utf-8") as handle:
        handle.write("tampered\n")
    assert not verify_manifest(manifest, str(path))


def test_manifest_round_trip() -> None:
    manifest = DatasetManifest(
        teacher_id="t", method="mbr", utility="chrf", candidate_size=8,
        epsilon=0.02, seed=1, source_digest="a" * 64, dataset_digest="b" * 64,
        record_count=10, mean_score=1.25, round=2, parent_digest="c" * 64,
        skipped_seg_ids=("s1",),
    )
    buffer = io.StringIO()
    write_manifest(manifest, buffer)
    assert read_manifest(io.StringIO(buffer.getvalue())) == manifest


def test_iterate_round_links_parent_and_bumps_round() -> None:
    utility = resolve_utility("chrf_qe")
    first_examples, first = generate_dataset(
        SOURCES, job("qe"), provider=PROVIDER, utility=utility
    )
    assert first.round == 1
    second_examples, second = iterate_round(
        first, SOURCES, job("qe"), provider=PROVIDER, utility=utility
    )
    assert second.round == 2
    assert second.parent_digest == first.dataset_digest
    # Identical candidates and config give identical records across rounds.
    assert second_examples == first_examples
    third = iterate_round(second, SOURCES, job("qe"), provider=PROVIDER, utility=utility)[1]
    assert third.round == 3
    with pytest.raises(DataError, match="mbr or qe"):
        iterate_round(first, SOURCES, job("greedy"), provider=PROVIDER)


def make_examples(method: str, count: int) -> list[DistillExample]:
    return [
        DistillExample(
            seg_id=f"s{i}", source=f"src {i}", target=f"tgt {i}", method=method,
            score=None if method in ("greedy", "sample", "reference") else float(i),
            teacher_id="t",
        )
        for i in range(count)
    ]


def test_mix_balanced_equal_sizes_alternates() -> None:
    a = make_examples("mbr", 10)
    b = make_examples("qe", 10)
    mixed = mix_datasets([a, b], "balanced")
    assert len(mixed) == 20
    assert [ex.method for ex in mixed[:4]] == ["mbr", "qe", "mbr", "qe"]


def test_mix_balanced_truncates_to_minimum() -> None:
    mixed = mix_datasets([make_examples("mbr", 10), make_examples("qe", 4)], "balanced")
    assert len(mixed) == 8
    assert sum(1 for ex in mixed if ex.method == "mbr") == 4


def test_mix_concat_and_errors() -> None:
    a, b = make_examples("mbr", 3), make_examples("qe", 2)
    assert mix_datasets([a, b], "concat") == a + b
    with pytest.raises(DataError):
        mix_datasets([a, []], "balanced")
    with pytest.raises(DataError):
        mix_datasets([a], "balanced")
    with pytest.raises(DataError):
        mix_datasets([a, b], "shuffle")


def test_mix_mbr_qe_over_same_sources_counts() -> None:
    utility_ref = resolve_utility("chrf")
    utility_qe = resolve_utility("chrf_qe")
    mbr_data, _ = generate_dataset(SOURCES, job("mbr"), provider=PROVIDER, utility=utility_ref)
    qe_data, _ = generate_dataset(SOURCES, job("qe"), provider=PROVIDER, utility=utility_qe)
    mixed = mix_datasets([mbr_data, qe_data], "balanced")
    assert len(mixed) == 2 * len(SOURCES)
    assert sum(1 for ex in mixed if ex.method == "mbr") == len(SOURCES)
    assert sum(1 for ex in mixed if ex.method == "qe") == len(SOURCES)


def test_dataset_digest_matches_writer_bytes() -> None:
    examples = make_examples("qe", 5)
    buffer = io.StringIO()
    write_distill_dataset(examples, buffer)
    import hashlib

    assert dataset_digest(examples) == hashlib.sha256(buffer.getvalue().encode()).hexdigest()


def test_job_config_validation() -> None:
    with pytest.raises(ValueError, match="utility"):
        DistillJobConfig(method="mbr", teacher_id="t")
    with pytest.raises(ValueError, match="teacher_id"):
        DistillJobConfig(method="greedy", teacher_id="")
    with pytest.raises(ValueError, match="method"):
        DistillJobConfig(method="viterbi", teacher_id="t")
