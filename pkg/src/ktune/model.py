"""Efficiency, portability and dynamic-tuning amortization arithmetic.

Units: runtimes are nanoseconds, memory operations are bytes, arithmetic
operations are flops, device peaks are GB/s and GFlop/s (1e9 per second), so
``bytes / ns`` is directly GB/s.
"""
from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .search import Measurement, Status
from .trace import Trace


@dataclass(frozen=True)
class DeviceSpec:
    name: str
    alu_peak: float  # GFlop/s, single precision
    mem_peak: float  # GB/s

    def __post_init__(self):
        if not (self.alu_peak > 0 and self.mem_peak > 0):
            raise ValueError(f"device {self.name}: peaks must be > 0")


# Published peaks of the evaluation devices (SP GFlop/s, GB/s).
DEVICES = {
    "e5-2650x2": DeviceSpec("2x Xeon E5-2650", 512, 102),
    "5110p": DeviceSpec("Xeon Phi 5110P", 2022, 320),
    "k20": DeviceSpec("Tesla K20", 3524, 208),
    "gtx750": DeviceSpec("GeForce GTX 750", 1044, 80),
    "gtx1070": DeviceSpec("GeForce GTX 1070", 5783, 256),
    "vega56": DeviceSpec("Radeon RX Vega 56", 8286, 410),
    "rtx2080ti": DeviceSpec("GeForce RTX 2080Ti", 11750, 616),
}


@dataclass(frozen=True)
class WorkloadSpec:
    benchmark: str
    params: Mapping[str, int] = field(default_factory=dict)
    variant: str | None = None  # "turing" drops the reciprocal sqrt flop

    def __post_init__(self):
        for k, v in self.params.items():
            if v < 1:
                raise ValueError(f"size {k} must be >= 1")


# (boundedness, formula) per benchmark; memory formulas count bytes.
_OPS = {
    "bicg": ("memory", lambda p: 4 * p["a"] ** 2),
    "coulomb3d": ("compute", lambda p: 6 * p["a"] * p["k"] ** 3),
    "gemm": ("compute", lambda p: 2 * p["a"] ** 3),
    "gemm_batched": ("memory", lambda p: 12 * p["n"] * p["a"] ** 2),
    "hotspot": ("memory", lambda p: 4 * p["i"] * p["a"] ** 2),
    "transpose": ("memory", lambda p: 8 * p["a"] ** 2),
    "nbody": ("compute", lambda p: 20 * p["n"] ** 2),
    "reduction": ("memory", lambda p: 4 * p["n"]),
}
_TURING = {
    "coulomb3d": lambda p: 5 * p["a"] * p["k"] ** 3,
    "nbody": lambda p: 19 * p["n"] ** 2,
}


def boundedness(benchmark: str) -> str:
    try:
        return _OPS[benchmark][0]
    except KeyError:
        raise ValueError(f"unknown benchmark {benchmark!r}") from None


def ops_for_workload(w: WorkloadSpec) -> tuple[int, int]:
    """Essential (memory bytes, flops) of a benchmark run; one of them is zero."""
    if w.benchmark not in _OPS:
        raise ValueError(f"unknown benchmark {w.benchmark!r}")
    bound, formula = _OPS[w.benchmark]
    if w.variant == "turing" and w.benchmark in _TURING:
        formula = _TURING[w.benchmark]
    elif w.variant not in (None, "turing"):
        raise ValueError(f"unknown variant {w.variant!r}")
    try:
        ops = formula(w.params)
    except KeyError as exc:
        raise ValueError(f"{w.benchmark}: missing size {exc.args[0]!r}") from None
    return (ops, 0) if bound == "memory" else (0, ops)


def efficiency(runtime_ns: float, mem_ops: float, alu_ops: float, device: DeviceSpec) -> float:
    """Percent of the device's binding peak reached by a run."""
    if not runtime_ns > 0:
        raise ValueError("runtime must be > 0")
    mem = (mem_ops / runtime_ns) / device.mem_peak
    alu = (alu_ops / runtime_ns) / device.alu_peak
    return 100.0 * max(mem, alu)


def throughput(runtime_ns: float, ops: float) -> float:
    """GB/s or GFlop/s for ``ops`` bytes or flops done in ``runtime_ns``."""
    return ops / runtime_ns


# -- portability ------------------------------------------------------------------

@dataclass(frozen=True)
class PortabilityMatrix:
    """``values[i][j]``: percent of device j's best reached by device i's best config.

    ``None`` marks a failed cross-run.
    """

    devices: tuple[str, ...]
    values: tuple[tuple[float | None, ...], ...]

    @property
    def failed(self) -> int:
        return sum(v is None for row in self.values for v in row)

    def entry(self, tuned_on: str, run_on: str) -> float | None:
        return self.values[self.devices.index(tuned_on)][self.devices.index(run_on)]

    def off_diagonal(self) -> list[float]:
        n = len(self.devices)
        return [self.values[i][j] for i in range(n) for j in range(n)
                if i != j and self.values[i][j] is not None]

    def summary(self) -> dict:
        vals = self.off_diagonal()
        return {
            "mean": statistics.fmean(vals) if vals else None,
            "stdev": statistics.pstdev(vals) if len(vals) > 1 else 0.0 if vals else None,
            "worst": min(vals) if vals else None,
            "failed": self.failed,
        }

    def to_json(self) -> dict:
        return {"devices": list(self.devices),
                "matrix": [[("FAILED" if v is None else v) for v in row] for row in self.values],
                **self.summary()}


def portability(native_perf: float, cross_perf: float) -> float:
    """Percent of a device's own best performance retained by a foreign configuration."""
    if not native_perf > 0:
        raise ValueError("native performance must be > 0")
    return 100.0 * cross_perf / native_perf


def _key(cfg) -> tuple:
    return tuple(sorted(dict(cfg.items() if hasattr(cfg, "items") else cfg).items()))


def portability_matrix(traces: Mapping[str, Trace | Sequence[Measurement]]) -> PortabilityMatrix:
    """Cross-device matrix from per-device traces.

    Entry (i, j) is ``100 * runtime_j(best_j) / runtime_j(best_i)``; the
    diagonal is exactly 100. A best configuration of device i that is missing
    or failed in device j's trace yields a FAILED (``None``) entry.
    """
    devices = tuple(traces)
    runtimes: dict[str, dict[tuple, int | None]] = {}
    bests: dict[str, tuple] = {}
    for dev, tr in traces.items():
        rows = tr.rows if isinstance(tr, Trace) else tr
        table: dict[tuple, int | None] = {}
        best_key, best_rt = None, None
        for row in rows:
            cfg = row.cfg if isinstance(tr, Trace) else row.configuration
            status = row.status
            rt = row.runtime_ns if status is Status.OK else None
            k = _key(cfg)
            table.setdefault(k, rt)
            if rt is not None and (best_rt is None or rt < best_rt):
                best_key, best_rt = k, rt
        if best_key is None:
            raise ValueError(f"device {dev}: no successful measurement")
        runtimes[dev] = table
        bests[dev] = best_key
    values = []
    for di in devices:
        row = []
        for dj in devices:
            if di == dj:
                row.append(100.0)
                continue
            own = runtimes[dj][bests[dj]]
            foreign = runtimes[dj].get(bests[di])
            row.append(None if foreign is None else 100.0 * own / foreign)
        values.append(tuple(row))
    return PortabilityMatrix(devices, tuple(values))


def portability_matrix_from_performance(perf: Mapping[tuple[str, str], float | None]) -> PortabilityMatrix:
    """Matrix from measured performance (e.g. GB/s) keyed ``(tuned_on, run_on)``.

    Each device's native entry ``(d, d)`` is required.
    """
    devices = []
    for i, j in perf:
        for d in (i, j):
            if d not in devices:
                devices.append(d)
    values = []
    for di in devices:
        row = []
        for dj in devices:
            native = perf.get((dj, dj))
            if native is None:
                raise ValueError(f"missing native performance of {dj}")
            cross = perf.get((di, dj))
            row.append(100.0 if di == dj else None if cross is None else portability(native, cross))
        values.append(tuple(row))
    return PortabilityMatrix(tuple(devices), tuple(values))


# -- amortization ---------------------------------------------------------------------

def _ceil(x: float) -> int:
    """Ceiling that ignores floating-point dust just above an integer."""
    r = round(x)
    if abs(x - r) <= 1e-9 * max(1.0, abs(x)):
        return int(r)
    return math.ceil(x)


def relative_perf(s: float, t_avg: float, t_well: float, n: float) -> float:
    """Runtime of n invocations with s tuning steps over n invocations at t_well.

    This is the ratio as written in the amortization model; it is >= 1 when
    ``t_avg >= t_well``. :func:`relative_performance` is its reciprocal, the
    performance fraction that :func:`invocations_to_amortize` inverts.
    """
    if n <= 0:
        raise ValueError("n must be > 0")
    if not 0 <= s <= n:
        raise ValueError("need 0 <= s <= n")
    if not t_well > 0:
        raise ValueError("t_well must be > 0")
    return (s * t_avg + (n - s) * t_well) / (n * t_well)


def relative_performance(s: float, t_avg: float, t_well: float, n: float) -> float:
    """Performance fraction of the dynamically tuned run versus one using t_well throughout."""
    if n <= 0:
        raise ValueError("n must be > 0")
    if not t_well > 0:
        raise ValueError("t_well must be > 0")
    return n * t_well / (s * t_avg + (n - s) * t_well)


def invocations_raw(rp: float, s: float, t_avg: float, t_well: float) -> float:
    if not 0 < rp < 1:
        raise ValueError("unreachable target: rp must be in (0, 1)")
    if not t_well > 0:
        raise ValueError("t_well must be > 0")
    if t_avg < t_well:
        raise ValueError("t_avg must be >= t_well")
    return rp * s * (t_avg / t_well - 1) / (1 - rp)


def invocations_to_amortize(rp: float, s: float, t_avg: float, t_well: float) -> int:
    """Kernel invocations (tuning included) needed to reach relative performance rp."""
    return _ceil(invocations_raw(rp, s, t_avg, t_well))


def steps_for_probability(r: float, p: float) -> int:
    """Random-search steps that hit a well-performing configuration with probability p."""
    if not 0 < r <= 1:
        raise ValueError("r must be in (0, 1]")
    if not 0 < p < 1:
        raise ValueError("p must be in (0, 1)")
    if r == 1:
        return 1
    return max(1, _ceil(math.log1p(-p) / math.log1p(-r)))


@dataclass(frozen=True)
class AmortizationReport:
    r: float
    s: int
    t_avg: float
    t_well: float
    n: int
    best: float
    configurations: int
    well_performing: int
    well_threshold: float
    p: float
    overhead_target: float

    def to_json(self) -> dict:
        return dict(self.__dict__)


def amortization_report(trace: Trace | Iterable[Measurement], well_threshold: float = 0.95,
                        p: float = 0.9, overhead_target: float = 0.9) -> AmortizationReport:
    """Steps and invocations needed to amortize dynamic tuning over a recorded space.

    Well-performing means runtime <= best / well_threshold. Failed
    configurations are excluded from both the ratio and the average runtime.
    """
    if not 0 < well_threshold <= 1:
        raise ValueError("well_threshold must be in (0, 1]")
    if isinstance(trace, Trace):
        runtimes = [row.runtime_ns for row in trace.rows if row.status is Status.OK]
    else:
        runtimes = [m.runtime_ns for m in trace if m.status is Status.OK]
    if not runtimes:
        raise ValueError("no successful measurements")
    best = min(runtimes)
    t_well = best / well_threshold
    well = sum(1 for t in runtimes if t <= t_well)
    r = well / len(runtimes)
    t_avg = statistics.fmean(runtimes)
    s = steps_for_probability(r, p)
    # average below the threshold runtime means no overhead to amortize
    n = invocations_to_amortize(overhead_target, s, max(t_avg, t_well), t_well)
    return AmortizationReport(r, s, t_avg, t_well, n, best, len(runtimes), well,
                              well_threshold, p, overhead_target)
