from __future__ import annotations

import threading
from typing import Callable

from mbrkit.metrics import Utility


def counted_utility(
    name: str, kind: str, fn: Callable[[str, str], float]
) -> tuple[Utility, dict[str, int]]:
    """Wrap a pair function so every single evaluation is counted (atomically)."""
    counter = {"calls": 0}
    lock = threading.Lock()

    def wrapped(hypothesis: str, against: str) -> float:
        with lock:
            counter["calls"] += 1
        return fn(hypothesis, against)

    return Utility(name, kind, pair_fn=wrapped), counter
