import math
from typing import Sequence


def trimmed_indices(keys: Sequence[float], trim: float) -> list:
    """Indices kept after sorting by ``keys`` and dropping floor(trim*n) from each end."""
    n = len(keys)
    k = int(math.floor(trim * n + 1e-9))
    order = sorted(range(n), key=lambda i: (keys[i], i))
    if 2 * k >= n:
        k = (n - 1) // 2
    return order[k:n - k]


def trimmed_mean(values: Sequence[float], trim: float = 0.2) -> float:
    keep = trimmed_indices(values, trim)
    return math.fsum(values[i] for i in keep) / len(keep)
