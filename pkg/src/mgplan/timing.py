"""Scoped wall-clock accounting for the runtime breakdown report."""
import time
from contextlib import contextmanager

PHASES = ("sampling", "prediction", "tsp", "collision+simulate", "other")


class PhaseTimer:
    """Accumulates time per named phase; ``other`` is whatever is left of the total."""

    def __init__(self, start=None):
        self.start = time.perf_counter() if start is None else start
        self.totals = {p: 0.0 for p in PHASES if p != "other"}
        self.total = None

    def add(self, phase: str, seconds: float) -> None:
        self.totals[phase] += seconds

    @contextmanager
    def phase(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.totals[name] += time.perf_counter() - t0

    def finish(self) -> dict:
        self.total = time.perf_counter() - self.start
        out = dict(self.totals)
        out["other"] = max(self.total - sum(self.totals.values()), 0.0)
        return out
