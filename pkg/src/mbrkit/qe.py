"""QE reranking: score each candidate once against the source, take the argmax.

Costs exactly n utility evaluations, one per candidate, and never touches the
segment's reference. Ties break to the lowest sample_index, matching MBR.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

from .core import REFERENCE_FREE, CandidateSet, DataError, SelectionResult
from .metrics import Utility

DEFAULT_QE_BATCH = 256


def _score_candidates(
    cs: CandidateSet, utility: Utility, count: int, batch_size: int, workers: int
) -> list[float]:
    if utility.kind != REFERENCE_FREE:
        raise DataError(
            f"QE needs a reference_free utility, got {utility.name!r} ({utility.kind})"
        )
    source = cs.segment.source
    items: list[tuple[str, str | None]] = [
        (cand.text, None) for cand in cs.candidates[:count]
    ]
    batches = [items[i : i + batch_size] for i in range(0, len(items), batch_size)]

    def run(batch: list[tuple[str, str | None]]) -> list[float]:
        try:
            return utility.score_batch(source, batch)
        except Exception as exc:
            raise DataError(
                f"segment {cs.segment.seg_id!r}: utility {utility.name!r} failed: {exc}"
            ) from exc

    if workers > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scored = list(pool.map(run, batches))
    else:
        scored = [run(batch) for batch in batches]
    return [score for batch in scored for score in batch]


def _rank(scores: list[float], indices: list[int]) -> tuple[tuple[int, float], ...]:
    order = sorted(range(len(scores)), key=lambda k: (-scores[k], indices[k]))
    return tuple((indices[k], scores[k]) for k in order)


def qe_select(
    cs: CandidateSet,
    utility: Utility,
    *,
    batch_size: int = DEFAULT_QE_BATCH,
    workers: int = 1,
) -> SelectionResult:
    """Pick the candidate maximizing the reference-free utility against the source."""
    n = len(cs.candidates)
    scores = _score_candidates(cs, utility, n, batch_size, workers)
    indices = [cand.sample_index for cand in cs.candidates]
    ranking = _rank(scores, indices)
    return SelectionResult(
        seg_id=cs.segment.seg_id,
        method="qe",
        ranking=ranking,
        chosen=ranking[0][0],
        utility_calls=n,
    )


def qe_rerank_topk(
    cs: CandidateSet,
    utility: Utility,
    k: int,
    *,
    batch_size: int = DEFAULT_QE_BATCH,
    workers: int = 1,
) -> list[tuple[int, float]]:
    """QE ranking restricted to the first k candidates; costs k evaluations."""
    n = len(cs.candidates)
    if not 1 <= k <= n:
        raise DataError(f"k must be in [1, {n}], got {k}")
    scores = _score_candidates(cs, utility, k, batch_size, workers)
    indices = [cand.sample_index for cand in cs.candidates[:k]]
    return list(_rank(scores, indices))
