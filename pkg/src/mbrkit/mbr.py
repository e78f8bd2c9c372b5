"""MBR scoring: pairwise utility matrix and expected-utility selection.

Every candidate is scored against every candidate-as-pseudo-reference, which
costs n^2 utility evaluations (n(n-1) when the diagonal is excluded). The
candidate with the highest mean utility wins; ties break to the lowest
sample_index. Duplicated candidates are kept on both axes: the empirical
sample distribution is the point of the estimate.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .core import REFERENCE_BASED, CandidateSet, DataError, SelectionResult
from .metrics import Utility

DEFAULT_MATRIX_BATCH = 64


@dataclass(frozen=True, slots=True)
class UtilityMatrix:
    """Pairwise utilities; values[i][j] scores candidate i against candidate j.

    Excluded diagonal cells are None. No symmetry is assumed.
    """

    seg_id: str
    n: int
    include_self: bool
    values: tuple[tuple[float | None, ...], ...]

    def to_obj(self) -> dict:
        from .core import quantize_score

        return {
            "seg_id": self.seg_id,
            "n": self.n,
            "include_self": self.include_self,
            "values": [[quantize_score(v) for v in row] for row in self.values],
        }


def _require_reference_based(utility: Utility) -> None:
    if utility.kind != REFERENCE_BASED:
        raise DataError(
            f"MBR needs a reference_based utility, got {utility.name!r} "
            f"({utility.kind})"
        )


def _score_pairs(
    cs: CandidateSet,
    utility: Utility,
    cells: list[tuple[int, int]],
    batch_size: int,
    workers: int,
) -> dict[tuple[int, int], float]:
    """Score (row, col) cells in row-major batches; deterministic by cell index."""
    source = cs.segment.source
    texts = [cand.text for cand in cs.candidates]
    batches = [cells[i : i + batch_size] for i in range(0, len(cells), batch_size)]

    def run(batch: list[tuple[int, int]]) -> list[float]:
        items = [(texts[i], texts[j]) for i, j in batch]
        try:
            return utility.score_batch(source, items)
        except Exception as exc:
            raise DataError(
                f"segment {cs.segment.seg_id!r}: utility {utility.name!r} failed on "
                f"pairs {batch[0]}..{batch[-1]}: {exc}"
            ) from exc

    results: dict[tuple[int, int], float] = {}
    if workers > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scored = list(pool.map(run, batches))
    else:
        scored = [run(batch) for batch in batches]
    for batch, scores in zip(batches, scored):
        for cell, score in zip(batch, scores):
            results[cell] = score
    return results


def utility_matrix(
    cs: CandidateSet,
    utility: Utility,
    include_self: bool = True,
    *,
    batch_size: int = DEFAULT_MATRIX_BATCH,
    workers: int = 1,
) -> UtilityMatrix:
    """Compute all pairwise utilities for a candidate set.

    Issues exactly n^2 evaluations (include_self) or n(n-1) otherwise.
    """
    _require_reference_based(utility)
    n = len(cs.candidates)
    cells = [(i, j) for i in range(n) for j in range(n) if include_self or i != j]
    scores = _score_pairs(cs, utility, cells, batch_size, workers)
    rows = tuple(
        tuple(scores.get((i, j)) if (include_self or i != j) else None for j in range(n))
        for i in range(n)
    )
    return UtilityMatrix(
        seg_id=cs.segment.seg_id, n=n, include_self=include_self, values=rows
    )


def mbr_expected_utilities(matrix: UtilityMatrix) -> list[float]:
    """Row means over included columns; 0.0 (with a warning) when none remain."""
    means = []
    for i, row in enumerate(matrix.values):
        included = [v for v in row if v is not None]
        if not included:
            warnings.warn(
                f"segment {matrix.seg_id!r}: candidate {i} has no pseudo-references "
                "(singleton with the diagonal excluded); score defined as 0.0",
                stacklevel=2,
            )
            means.append(0.0)
        else:
            means.append(sum(included) / len(included))
    return means


def _rank(scores: list[float], indices: list[int]) -> tuple[tuple[int, float], ...]:
    order = sorted(range(len(scores)), key=lambda k: (-scores[k], indices[k]))
    return tuple((indices[k], scores[k]) for k in order)


def mbr_select(
    cs: CandidateSet,
    utility: Utility,
    include_self: bool = True,
    *,
    batch_size: int = DEFAULT_MATRIX_BATCH,
    workers: int = 1,
) -> SelectionResult:
    """Pick the candidate with the highest mean utility against all candidates."""
    matrix = utility_matrix(
        cs, utility, include_self, batch_size=batch_size, workers=workers
    )
    scores = mbr_expected_utilities(matrix)
    indices = [cand.sample_index for cand in cs.candidates]
    ranking = _rank(scores, indices)
    n = matrix.n
    calls = n * n if include_self else n * (n - 1)
    return SelectionResult(
        seg_id=cs.segment.seg_id,
        method="mbr",
        ranking=ranking,
        chosen=ranking[0][0],
        utility_calls=calls,
    )


def mbr_rerank_topk(
    cs: CandidateSet,
    utility: Utility,
    k: int,
    include_self: bool = True,
    *,
    batch_size: int = DEFAULT_MATRIX_BATCH,
    workers: int = 1,
) -> list[tuple[int, float]]:
    """Rank only the first k candidates, keeping the full pseudo-reference set.

    Per-candidate scores are unchanged by k, so the best score is monotone
    non-decreasing as k grows. Costs k*n (or k*(n-1)) evaluations.
    """
    n = len(cs.candidates)
    if not 1 <= k <= n:
        raise DataError(f"k must be in [1, {n}], got {k}")
    _require_reference_based(utility)
    cells = [(i, j) for i in range(k) for j in range(n) if include_self or i != j]
    scores_by_cell = _score_pairs(cs, utility, cells, batch_size, workers)
    scores = []
    for i in range(k):
        row = [scores_by_cell[(i, j)] for j in range(n) if include_self or i != j]
        scores.append(sum(row) / len(row) if row else 0.0)
    indices = [cand.sample_index for cand in cs.candidates[:k]]
    return list(_rank(scores, indices))
