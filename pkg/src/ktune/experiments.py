"""Search experiments over recorded traces.

Replay execution is pure, so repetitions drive a searcher directly against
precomputed measurements instead of going through a full tuner.
"""
from __future__ import annotations

import random
import statistics
from dataclasses import dataclass

from .model import steps_for_probability
from .search import Measurement, SearcherKind, Status, make_searcher
from .space import Configuration
from .trace import Trace, TraceRow, space_from_trace


@dataclass(frozen=True)
class SearchStats:
    searcher: str
    reps: int
    steps: tuple[int | None, ...]  # steps to the first well-performing config, None if never
    predicted_steps: int

    @property
    def found(self) -> list[int]:
        return [s for s in self.steps if s is not None]

    def p_within(self, k: int) -> float:
        return sum(1 for s in self.steps if s is not None and s <= k) / self.reps

    def to_json(self) -> dict:
        found = self.found
        return {
            "searcher": self.searcher,
            "reps": self.reps,
            "predicted_steps": self.predicted_steps,
            "p_within_predicted": self.p_within(self.predicted_steps),
            "p_within_1": self.p_within(1),
            "median_steps": statistics.median(found) if found else None,
            "mean_steps": statistics.fmean(found) if found else None,
            "max_steps": max(found) if found else None,
            "not_found": self.reps - len(found),
        }


def trace_measurements(trace: Trace) -> dict[Configuration, Measurement]:
    """First recorded measurement of every distinct configuration in the trace."""
    space = space_from_trace(trace)
    out: dict[Configuration, Measurement] = {}
    for row in trace.rows:
        cfg = space.configuration(row.cfg)
        if cfg not in out:
            out[cfg] = Measurement(cfg, row.status, row.runtime_ns if row.status is Status.OK else None,
                                   row.compile_ns)
    return out


def well_performing(measurements, well_threshold: float) -> set[Configuration]:
    ok = [m.runtime_ns for m in measurements.values() if m.ok]
    if not ok:
        raise ValueError("trace has no successful measurement")
    limit = min(ok) / well_threshold
    return {c for c, m in measurements.items() if m.ok and m.runtime_ns <= limit}


def replay_search(trace: Trace, searcher: SearcherKind | str = "random", reps: int = 1000,
                  well_threshold: float = 0.95, p: float = 0.9, seed: int = 0,
                  max_steps: int | None = None) -> SearchStats:
    """Run ``reps`` independent searches (seeds ``seed .. seed+reps-1``) over a trace.

    Each repetition stops at the first well-performing configuration, after
    ``max_steps`` steps, or when the space is exhausted.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if not 0 < well_threshold <= 1:
        raise ValueError("well threshold must be in (0, 1]")
    kind = SearcherKind(searcher) if isinstance(searcher, str) else searcher
    space = space_from_trace(trace)
    table = trace_measurements(trace)
    good = well_performing(table, well_threshold)
    predicted = steps_for_probability(len(good) / len(table), p)
    limit = max_steps or len(table)
    results: list[int | None] = []
    for rep in range(reps):
        s = make_searcher(kind, space, seed + rep)
        hit = None
        for step in range(1, limit + 1):
            cfg = s.propose()
            if cfg is None:
                break
            if cfg in good:
                hit = step
                break
            s.observe(table[cfg])
        results.append(hit)
    return SearchStats(kind.tag, reps, tuple(results), predicted)


def planted_trace(n: int, well: int, seed: int = 0, best_ns: int = 1_000_000,
                  device: str = "synthetic") -> Trace:
    """One-parameter trace of ``n`` configs of which ``well`` are within 5% of the best.

    Well-performing runtimes lie in [best, best/0.95]; the rest are at least
    1.5x slower, so any threshold in [0.67, 0.95] sees the same planted set.
    """
    if not 0 < well <= n:
        raise ValueError("need 0 < well <= n")
    rng = random.Random(seed)
    idx = list(range(n))
    rng.shuffle(idx)
    good = set(idx[:well])
    rows = []
    for v in range(n):
        if v == idx[0]:
            rt = best_ns
        elif v in good:
            rt = int(best_ns * (1 + rng.uniform(0, 0.05)))
        else:
            rt = int(best_ns * rng.uniform(1.5, 10))
        rows.append(TraceRow({"X": v}, rt, 0, Status.OK))
    return Trace(device, "", rows)


def valley_trace(n: int, center: int, best_ns: int = 1_000_000, slope: float = 0.02,
                 device: str = "synthetic") -> Trace:
    """One-parameter trace whose runtime grows linearly with distance from ``center``."""
    if not 0 <= center < n:
        raise ValueError("center must index a configuration")
    rows = [TraceRow({"X": v}, int(best_ns * (1 + slope * abs(v - center))), 0, Status.OK)
            for v in range(n)]
    return Trace(device, "", rows)
