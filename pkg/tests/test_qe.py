from __future__ import annotations

import pytest
from conftest import counted_utility

from mbrkit.core import Candidate, CandidateSet, DataError, Segment
from mbrkit.metrics import Utility, resolve_utility
from mbrkit.qe import qe_rerank_topk, qe_select


def make_set(texts: list[str], source: str = "src") -> CandidateSet:
    return CandidateSet(
        segment=Segment(seg_id="s", source=source),
        candidates=tuple(Candidate(text=t, sample_index=i) for i, t in enumerate(texts)),
    )


def scripted_utility(scores: dict[str, float]) -> Utility:
    return Utility("scripted", "reference_free", pair_fn=lambda h, s: scores[h])


def test_qe_select_argmax() -> None:
    utility = scripted_utility({"a": 0.1, "b": 0.9, "c": 0.4})
    sel = qe_select(make_set(["a", "b", "c"]), utility)
    assert sel.chosen == 1
    assert sel.method == "qe"
    assert [i for i, _ in sel.ranking] == [1, 2, 0]


def test_qe_all_equal_ties_to_first() -> None:
    utility = scripted_utility({"a": 0.5, "b": 0.5, "c": 0.5})
    sel = qe_select(make_set(["a", "b", "c"]), utility)
    assert sel.chosen == 0


def test_qe_negative_length_stub_prefers_shortest() -> None:
    utility = Utility("neglen", "reference_free", pair_fn=lambda h, s: -float(len(h)))
    texts = ["looooong", "mid", "tiny", "xx", "three"]
    sel = qe_select(make_set(texts), utility)
    shortest = min(range(len(texts)), key=lambda i: (len(texts[i]), i))
    assert sel.chosen == shortest


def test_qe_call_count_is_linear() -> None:
    for n in (1, 2, 7):
        utility, counter = counted_utility("const", "reference_free", lambda h, s: 0.0)
        sel = qe_select(make_set([f"t{i}" for i in range(n)]), utility)
        assert counter["calls"] == n == sel.utility_calls


def test_qe_rejects_reference_based_utility() -> None:
    with pytest.raises(DataError, match="reference_free"):
        qe_select(make_set(["a"]), resolve_utility("chrf"))


def test_qe_never_reads_reference() -> None:
    class TrappedSegment:
        seg_id = "trap"
        source = "safe source"
        domain_tag = None

        @property
        def reference(self) -> str:
            raise AssertionError("QE scoring must not touch the reference")

    cs = CandidateSet.__new__(CandidateSet)
    object.__setattr__(cs, "segment", TrappedSegment())
    object.__setattr__(cs, "candidates", (Candidate(text="a"), Candidate(text="b", sample_index=1)))
    utility = Utility("len", "reference_free", pair_fn=lambda h, s: float(len(h + s)))
    sel = qe_select(cs, utility)
    assert sel.utility_calls == 2


def test_qe_scores_against_source() -> None:
    utility = resolve_utility("chrf_qe")
    cs = make_set(["match me", "zzz"], source="match me")
    sel = qe_select(cs, utility)
    assert sel.chosen == 0
    assert sel.ranking[0][1] == 100.0


def test_qe_positive_affine_invariance() -> None:
    base = Utility("len", "reference_free", pair_fn=lambda h, s: float(len(h)))
    mapped = Utility("len2", "reference_free", pair_fn=lambda h, s: 3.0 * len(h) + 10.0)
    cs = make_set(["aa", "bbbb", "c"])
    assert qe_select(cs, base).chosen == qe_select(cs, mapped).chosen


def test_qe_rerank_topk_prefix_semantics() -> None:
    utility = scripted_utility({"a": 0.3, "b": 0.9, "c": 0.5, "d": 1.5})
    cs = make_set(["a", "b", "c", "d"])
    full = qe_select(cs, utility)
    assert [tuple(x) for x in qe_rerank_topk(cs, utility, 4)] == list(full.ranking)
    assert qe_rerank_topk(cs, utility, 1) == [(0, 0.3)]
    top2 = qe_rerank_topk(cs, utility, 2)
    assert top2[0] == (1, 0.9)
    truncated = make_set(["a", "b"])
    assert qe_rerank_topk(cs, utility, 2) == [tuple(x) for x in qe_select(truncated, utility).ranking]
    with pytest.raises(DataError):
        qe_rerank_topk(cs, utility, 0)
    with pytest.raises(DataError):
        qe_rerank_topk(cs, utility, 9)


def test_qe_prefix_winner_dominates_prefix() -> None:
    utility = Utility("hash", "reference_free", pair_fn=lambda h, s: float(hash(h) % 1000))
    texts = [f"cand{i}" for i in range(10)]
    cs = make_set(texts)
    for k in range(1, 11):
        ranking = qe_rerank_topk(cs, utility, k)
        top_score = ranking[0][1]
        assert all(top_score >= score for _, score in ranking)


def test_qe_batching_does_not_change_results() -> None:
    utility = resolve_utility("chrf_qe")
    cs = make_set([f"text number {i}" for i in range(10)], source="text number 3")
    assert qe_select(cs, utility, batch_size=1) == qe_select(cs, utility, batch_size=256)
    assert qe_select(cs, utility, workers=8) == qe_select(cs, utility, workers=1)
