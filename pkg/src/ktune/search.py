"""Searchers that navigate a tuning space using measurement feedback.

All searchers sample without replacement: ``propose()`` only ever returns
valid, not-yet-visited configurations and returns ``None`` once the space is
exhausted. Randomness comes from a ``random.Random`` seeded at construction,
so identical seeds and identical feedback give identical proposal sequences.
"""
from __future__ import annotations

import bisect
import enum
import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .space import Configuration, TuningSpace


class Status(str, enum.Enum):
    OK = "ok"
    COMPILE_FAILED = "compile_failed"
    RUN_FAILED = "run_failed"
    VALIDATION_FAILED = "validation_failed"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Measurement:
    configuration: Configuration
    status: Status
    runtime_ns: int | None = None
    compile_ns: int | None = None
    detail: str = ""

    def __post_init__(self):
        object.__setattr__(self, "status", Status(self.status))
        if self.status is Status.OK:
            if self.runtime_ns is None or self.runtime_ns <= 0:
                raise ValueError("ok measurement needs a positive runtime")
        elif self.runtime_ns is not None:
            object.__setattr__(self, "runtime_ns", None)

    @property
    def ok(self) -> bool:
        return self.status is Status.OK

    @property
    def energy(self) -> float:
        """Runtime in ns, or +inf for failed configurations."""
        return float(self.runtime_ns) if self.status is Status.OK else math.inf


def best_of(history: Iterable[Measurement]) -> Measurement | None:
    """Fastest ok measurement; ties go to the earliest one."""
    best = None
    for m in history:
        if m.status is Status.OK and (best is None or m.runtime_ns < best.runtime_ns):
            best = m
    return best


@dataclass
class SearchState:
    rng_seed: int = 0
    history: list[Measurement] = field(default_factory=list)
    visited: set[Configuration] = field(default_factory=set)

    def record(self, m: Measurement) -> None:
        self.history.append(m)
        self.visited.add(m.configuration)


@dataclass(frozen=True)
class SearcherKind:
    tag: str = "random"
    initial_temperature: float | None = None
    cooling_factor: float = 0.95

    TAGS = ("random", "annealing", "mcmc")

    def __post_init__(self):
        if self.tag not in self.TAGS:
            raise ValueError(f"unknown searcher {self.tag!r} (expected one of {', '.join(self.TAGS)})")
        if self.initial_temperature is not None and not self.initial_temperature > 0:
            raise ValueError("initial_temperature must be > 0")
        if not 0 < self.cooling_factor < 1:
            raise ValueError("cooling_factor must be in (0, 1)")


class _LazyShuffle:
    """Fisher-Yates over range(n), materializing only the swapped slots."""

    def __init__(self, n: int, rng: random.Random):
        self.n = n
        self.k = 0
        self.rng = rng
        self._swaps: dict[int, int] = {}

    def __next__(self) -> int:
        if self.k >= self.n:
            raise StopIteration
        i = self.k
        j = self.rng.randrange(i, self.n)
        swaps = self._swaps
        vi = swaps.pop(i, i)
        vj = swaps.get(j, j) if j != i else vi
        if j != i:
            swaps[j] = vi
        self.k += 1
        return vj

    def __iter__(self):
        return self


class Searcher:
    """Base class: visited bookkeeping, seeded RNG, random unvisited draws."""

    def __init__(self, space: TuningSpace, seed: int = 0):
        self.space = space
        self.configs = space.configurations()
        self.rng = random.Random(seed)
        self.visited: set[Configuration] = set()
        self._order = _LazyShuffle(len(self.configs), self.rng)

    @property
    def exhausted(self) -> bool:
        return len(self.visited) >= len(self.configs)

    def random_unvisited(self) -> Configuration | None:
        for idx in self._order:
            cfg = self.configs[idx]
            if cfg not in self.visited:
                return cfg
        # the permutation ran out while some configurations are unvisited
        # (only possible if observe() was fed configurations we never drew)
        for cfg in self.configs:
            if cfg not in self.visited:
                return cfg
        return None

    def propose(self) -> Configuration | None:
        raise NotImplementedError

    def observe(self, m: Measurement) -> None:
        self.visited.add(m.configuration)


class RandomSearcher(Searcher):
    def propose(self) -> Configuration | None:
        if self.exhausted:
            return None
        return self.random_unvisited()


def neighbors(space: TuningSpace, cfg: Configuration) -> list[Configuration]:
    """Valid configurations differing from ``cfg`` by one step in one parameter's domain order."""
    out = []
    for name, value in cfg.items():
        domain = space.domain(name)
        pos = space.value_position(name, value)
        for q in (pos - 1, pos + 1):
            if 0 <= q < len(domain):
                cand = cfg.replace(name, domain[q])
                if space.satisfies(cand):
                    out.append(cand)
    return out


def annealing_accept(current: float, proposed: float, temperature: float, u: float) -> bool:
    """Metropolis rule: always take a faster point, a slower one w.p. exp(-delta/T)."""
    if proposed < current:
        return True
    if math.isinf(proposed) or temperature <= 0:
        return False
    return u < math.exp(-(proposed - current) / temperature)


class AnnealingSearcher(Searcher):
    """Simulated annealing over single-parameter adjacent moves.

    Proposals are drawn uniformly from the unvisited valid neighbours of the
    current point. When the current point has none, the chain jumps to the
    fastest visited configuration that still has unvisited neighbours; when no
    such point exists it restarts from a random unvisited configuration.
    Temperature follows ``T_k = T0 * cooling**k`` with ``T0`` defaulting to
    0.2 x the first measured runtime.
    """

    def __init__(self, space, seed=0, initial_temperature=None, cooling_factor=0.95):
        super().__init__(space, seed)
        self.t0 = initial_temperature
        self.cooling = cooling_factor
        self.step = 0
        self.current: Configuration | None = None
        self.current_energy = math.inf
        self._ranked: list[tuple[float, int, Configuration]] = []
        self._energy: dict[Configuration, float] = {}

    @property
    def temperature(self) -> float:
        if self.t0 is None:
            return 0.0
        return self.t0 * self.cooling ** self.step

    def _unvisited_neighbors(self, cfg):
        return [c for c in neighbors(self.space, cfg) if c not in self.visited]

    def propose(self) -> Configuration | None:
        if self.exhausted:
            return None
        if self.current is not None:
            cands = self._unvisited_neighbors(self.current)
            if cands:
                return self.rng.choice(cands)
        for energy, _, cfg in self._ranked:
            cands = self._unvisited_neighbors(cfg)
            if cands:
                self.current, self.current_energy = cfg, energy
                return self.rng.choice(cands)
        return self.random_unvisited()

    def observe(self, m: Measurement) -> None:
        super().observe(m)
        cfg, energy = m.configuration, m.energy
        self._energy[cfg] = energy
        if math.isfinite(energy):
            bisect.insort(self._ranked, (energy, len(self._energy), cfg), key=lambda t: t[:2])
            if self.t0 is None:
                self.t0 = 0.2 * energy
        if self.current is None:
            if math.isfinite(energy):
                self.current, self.current_energy = cfg, energy
            return
        if annealing_accept(self.current_energy, energy, self.temperature, self.rng.random()):
            self.current, self.current_energy = cfg, energy
        self.step += 1


class MCMCSearcher(Searcher):
    """Metropolis random walk with acceptance ``t_current / t_proposed``.

    Restarts from a random unvisited configuration after 10 consecutive
    rejections or when the current point has no unvisited neighbours.
    """

    max_rejections = 10

    def __init__(self, space, seed=0):
        super().__init__(space, seed)
        self.current: Configuration | None = None
        self.current_energy = math.inf
        self.rejections = 0
        self._restart = True

    def propose(self) -> Configuration | None:
        if self.exhausted:
            return None
        if self.current is not None and self.rejections < self.max_rejections:
            cands = [c for c in neighbors(self.space, self.current) if c not in self.visited]
            if cands:
                self._restart = False
                return self.rng.choice(cands)
        self._restart = True
        self.rejections = 0
        return self.random_unvisited()

    def observe(self, m: Measurement) -> None:
        super().observe(m)
        energy = m.energy
        if self._restart or self.current is None:
            self._restart = False
            if math.isfinite(energy):
                self.current, self.current_energy = m.configuration, energy
            else:
                self.current = None
            return
        u = self.rng.random()
        if energy < self.current_energy or (math.isfinite(energy) and u < self.current_energy / energy):
            self.current, self.current_energy = m.configuration, energy
            self.rejections = 0
        else:
            self.rejections += 1


def make_searcher(kind: SearcherKind, space: TuningSpace, seed: int = 0) -> Searcher:
    if kind.tag == "random":
        return RandomSearcher(space, seed)
    if kind.tag == "annealing":
        return AnnealingSearcher(space, seed, kind.initial_temperature, kind.cooling_factor)
    return MCMCSearcher(space, seed)


def next_configuration(kind: SearcherKind, space: TuningSpace, state: SearchState) -> Configuration | None:
    """Stateless form of the searcher protocol.

    Rebuilds the searcher from the seed and replays the recorded feedback, so
    the result depends only on ``(kind, space, state)``. Returns ``None`` when
    the space is exhausted.
    """
    searcher = make_searcher(kind, space, state.rng_seed)
    for m in state.history:
        searcher.propose()
        searcher.observe(m)
    return searcher.propose()


def steps_to_first(history: Sequence[Measurement], predicate) -> int | None:
    """1-based index of the first measurement satisfying ``predicate``."""
    for i, m in enumerate(history, 1):
        if predicate(m):
            return i
    return None
