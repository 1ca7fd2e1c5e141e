"""Dynamic-tuning demo on batched GEMM with sizes that change every epoch.

Every epoch draws new matrix sizes, restarts the search and keeps calling
the step-wise tuner while the application iterates. Once the stop condition
fires (or the space is exhausted) the best configuration found so far is run
for the rest of the epoch.

Two performance series come out per epoch, both in GB/s of essential traffic:
the kernel-only performance of the best configuration found, and the
performance including tuning overhead (every iteration's kernel time plus
the compile time of each tuning step).
"""
from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass, field

import numpy as np

from ..executors import KernelDefinition, ReplayExecutor
from ..model import DEVICES, DeviceSpec
from ..search import Status
from ..tuner import ConfigBudget, PerformanceThreshold, StopCondition, Tuner
from ..trace import Trace, TraceRow
from .problems import bench_space, make_bench

SIZE_RANGE = (2, 32)
REPLAY_BATCH = 1 << 16
REPLAY_COMPILE_NS = 2_000_000


def gemm_bytes(i: int, j: int, k: int, batch: int) -> int:
    return 4 * batch * (i * j + i * k + j * k)


def _synthetic_efficiency(cfg, i: int, j: int, k: int) -> float:
    """Plausible fraction of peak bandwidth for a GEMM configuration.

    Rewards coarsening factors that divide the row count, work-groups of a
    sensible size, and staging when the inner dimension is large enough.
    """
    y, z, stage = cfg["Y"], cfg["Z"], cfg["LOCAL_STAGE"]
    eff = {1: 0.62, 2: 0.78, 4: 0.9, 8: 0.84}[y]
    eff *= j / (math.ceil(j / y) * y)  # idle rows in the last block
    threads = k * math.ceil(j / y) * z
    if threads < 32:
        eff *= 0.55
    elif threads < 64:
        eff *= 0.8
    elif threads > 512:
        eff *= 0.7
    eff *= 1.08 if (stage and i >= 12) else (0.93 if stage else 1.0)
    return min(eff, 0.97)


def synthetic_gemm_trace(i: int, j: int, k: int, device: DeviceSpec, seed: int,
                         noise: float = 0.05, batch: int = REPLAY_BATCH) -> Trace:
    """Replay trace of the GEMM space with lognormal noise baked into each runtime."""
    space = bench_space("batched_gemm")
    rng = np.random.default_rng(seed)
    sigma = math.sqrt(math.log1p(noise * noise)) if noise > 0 else 0.0
    nbytes = gemm_bytes(i, j, k, batch)
    rows = []
    for cfg in space.configurations():
        eff = _synthetic_efficiency(cfg, i, j, k)
        factor = float(rng.lognormal(-0.5 * sigma * sigma, sigma)) if sigma else 1.0
        runtime = max(1, int(round(nbytes / (eff * device.mem_peak) * factor)))
        rows.append(TraceRow(cfg.as_dict(), runtime, REPLAY_COMPILE_NS, Status.OK))
    return Trace(device.name, space.sha256(), rows)


@dataclass
class EpochReport:
    epoch: int
    sizes: dict[str, int]
    steps: int
    iterations: int
    step_configurations: list[dict]
    best_configuration: dict | None
    best_runtime_ns: int | None
    kernel_ns: int
    compile_ns: int
    mem_bytes: int

    @property
    def kernel_only_gbps(self) -> float:
        return self.mem_bytes / self.best_runtime_ns if self.best_runtime_ns else 0.0

    @property
    def with_overhead_gbps(self) -> float:
        total = self.kernel_ns + self.compile_ns
        return self.iterations * self.mem_bytes / total if total else 0.0

    def to_json(self) -> dict:
        d = dict(self.__dict__)
        d["kernel_only_gbps"] = self.kernel_only_gbps
        d["with_overhead_gbps"] = self.with_overhead_gbps
        return d


@dataclass
class DemoReport:
    seed: int
    device: str
    executor: str
    iters_per_epoch: int | None
    epochs: list[EpochReport] = field(default_factory=list)

    def to_json(self) -> dict:
        kern = [e.kernel_only_gbps for e in self.epochs]
        incl = [e.with_overhead_gbps for e in self.epochs]
        return {
            "seed": self.seed,
            "device": self.device,
            "executor": self.executor,
            "iters_per_epoch": self.iters_per_epoch,
            "mean_kernel_only_gbps": sum(kern) / len(kern),
            "mean_with_overhead_gbps": sum(incl) / len(incl),
            "epochs": [e.to_json() for e in self.epochs],
        }


def default_stop(device: DeviceSpec, mem_bytes: int) -> StopCondition:
    return PerformanceThreshold(0.75, device, mem_ops=mem_bytes) | ConfigBudget(20)


def dynamic_demo(epochs: int = 10, iters_per_epoch: int | None = 500, stop: StopCondition | None = None,
                 seed: int = 0, executor: str = "replay", device: str | DeviceSpec = "gtx1070",
                 noise: float = 0.05, epoch_seconds: float | None = None,
                 native_batch: int = 256, searcher: str = "random") -> DemoReport:
    """Run the demo; ``stop=None`` uses 75% of peak bandwidth or 20 configurations.

    ``executor="replay"`` answers from synthetic per-epoch traces and is fully
    deterministic; ``"native"`` runs the compiled kernel. With
    ``epoch_seconds`` each epoch lasts that much wall time instead of
    ``iters_per_epoch`` iterations.
    """
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    if epoch_seconds is None and (iters_per_epoch is None or iters_per_epoch < 1):
        raise ValueError("iters_per_epoch must be >= 1")
    if executor not in ("replay", "native"):
        raise ValueError(f"unknown demo executor {executor!r}")
    dev = DEVICES[device] if isinstance(device, str) else device
    rng = random.Random(seed)
    space = bench_space("batched_gemm")
    report = DemoReport(seed, dev.name, executor, None if epoch_seconds else iters_per_epoch)
    tuner, handle = None, "batched_gemm"

    for epoch in range(epochs):
        i, j, k = (rng.randint(*SIZE_RANGE) for _ in range(3))
        epoch_seed = rng.getrandbits(32)
        if executor == "replay":
            batch = REPLAY_BATCH
            ex = ReplayExecutor(synthetic_gemm_trace(i, j, k, dev, epoch_seed, noise))
            if tuner is None:
                tuner = Tuner(space, ex, searcher, epoch_seed, dev.name)
                tuner.add_kernel(KernelDefinition(handle, "replay:batched_gemm"))
            tuner.executor = ex
        else:
            batch = native_batch
            binding = make_bench("batched_gemm", {"i": i, "j": j, "k": k, "batch": batch}, epoch_seed)
            tuner, handle = binding.tuner(searcher, epoch_seed, dev.name)
        tuner.reset_tuning(handle, seed=epoch_seed)
        nbytes = gemm_bytes(i, j, k, batch)
        epoch_stop = stop or default_stop(dev, nbytes)

        steps, iters, kernel_ns, compile_ns = 0, 0, 0, 0
        stepped: list[dict] = []
        tuning = True
        deadline = time.monotonic() + epoch_seconds if epoch_seconds else None
        while (iters < iters_per_epoch) if deadline is None else (time.monotonic() < deadline):
            if tuning and tuner.should_stop(handle, epoch_stop):
                tuning = False
            if tuning:
                _, m = tuner.tune_kernel_by_step(handle)
                steps += 1
                stepped.append(m.configuration.as_dict())
                compile_ns += m.compile_ns or 0
            else:
                best = tuner.get_best_computation_result(handle)
                m = tuner.execute_configuration(handle, best[0]).measurement
            if m.status is Status.OK:
                kernel_ns += m.runtime_ns
            iters += 1
        best = tuner.results(handle).best
        report.epochs.append(EpochReport(
            epoch, {"i": i, "j": j, "k": k, "batch": batch}, steps, iters, stepped,
            best.configuration.as_dict() if best else None,
            best.runtime_ns if best else None, kernel_ns, compile_ns, nbytes))
    return report
