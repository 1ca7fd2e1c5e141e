"""Built-in tunable CPU benchmarks: reduction, tiled transpose and batched GEMM.

Each benchmark is wired to the engine as an in-process kernel: the executor
runs the parameterized implementation and reports the time measured around the
kernel call itself, so buffer copies made by the tuner are not counted.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from ..errors import KtuneError
from ..executors import ArgumentDescriptor, CallableExecutor, KernelDefinition, ReferenceSpec
from ..space import Constraint, ParameterDomain, TuningSpace
from ..tuner import Tuner
from . import _backend

KINDS = ("reduction", "transpose", "batched_gemm")
DEFAULT_SIZES = {
    "reduction": {"n": 1 << 20},
    "transpose": {"a": 512},
    "batched_gemm": {"i": 16, "j": 16, "k": 16, "batch": 4096},
}
DEFAULT_MEMORY_BUDGET = 1 << 30
FLOAT_TOLERANCE = {"abs_tol": 1e-4, "rel_tol": 1e-5}


@dataclass
class BenchProblem:
    kind: str
    sizes: dict[str, int]
    seed: int
    inputs: dict[str, np.ndarray]
    reference_output: dict[str, np.ndarray]

    @property
    def mem_bytes(self) -> int:
        """Essential bytes moved by one run (each input read once, output written once)."""
        s = self.sizes
        if self.kind == "reduction":
            return 4 * s["n"]
        if self.kind == "transpose":
            return 8 * s["a"] * s["a"]
        return 4 * s["batch"] * (s["i"] * s["j"] + s["i"] * s["k"] + s["j"] * s["k"])


@dataclass
class BenchBinding:
    problem: BenchProblem
    space: TuningSpace
    kernel: KernelDefinition
    arguments: list[ArgumentDescriptor]
    executor: CallableExecutor
    reference: ReferenceSpec
    backend: str = field(default=_backend.DEFAULT)

    @property
    def output_ids(self) -> list[str]:
        return [a.id for a in self.arguments if a.role in ("output", "inout")]

    def tuner(self, searcher="random", seed: int = 0, device: str = "cpu") -> tuple[Tuner, str]:
        """A tuner with arguments, kernel and reference registered; returns (tuner, handle)."""
        t = Tuner(self.space, self.executor, searcher, seed, device)
        for a in self.arguments:
            t.add_argument(a)
        handle = t.add_kernel(self.kernel, [a.id for a in self.arguments])
        t.set_reference(handle, self.reference)
        return t, handle


def bench_space(kind: str) -> TuningSpace:
    if kind == "reduction":
        return TuningSpace([ParameterDomain("CHUNK", [256, 1024, 4096, 16384]),
                            ParameterDomain("UNROLL", [1, 2, 4, 8]),
                            ParameterDomain("TWO_PHASE", [0, 1])])
    if kind == "transpose":
        return TuningSpace([ParameterDomain("TILE", [8, 16, 32, 64]),
                            ParameterDomain("PAD", [0, 1]),
                            ParameterDomain("PREFETCH", [0, 1])])
    if kind == "batched_gemm":
        return TuningSpace([ParameterDomain("Y", [1, 2, 4, 8]),
                            ParameterDomain("Z", [1, 2, 4, 8]),
                            ParameterDomain("LOCAL_STAGE", [0, 1])],
                           [Constraint.parse("Y * Z <= 64")])
    raise KtuneError(f"unknown bench kind {kind!r} (choose from {', '.join(KINDS)})")


def _sizes(kind: str, sizes: Mapping[str, int] | None) -> dict[str, int]:
    out = dict(DEFAULT_SIZES[kind])
    for k, v in (sizes or {}).items():
        if k not in out:
            raise KtuneError(f"{kind}: unknown size {k!r}")
        out[k] = int(v)
    for k, v in out.items():
        if v < 1:
            raise KtuneError(f"{kind}: size {k} must be >= 1")
    return out


def _footprint(kind: str, s: Mapping[str, int]) -> int:
    # inputs + outputs, one working copy of each, largest scratch
    if kind == "reduction":
        return 2 * 4 * s["n"] + 8 * (s["n"] // 256 + 1)
    if kind == "transpose":
        return 2 * 8 * s["a"] * s["a"] + 4 * 64 * 65
    b = s["batch"]
    return 2 * 4 * b * (s["i"] * s["j"] + s["i"] * s["k"] + s["j"] * s["k"]) + 4 * 8 * s["j"] * s["k"]


# -- scalar references ---------------------------------------------------------

def reference_sum(x: np.ndarray) -> np.ndarray:
    total = 0
    for v in x.tolist():
        total += v
    return np.array([total], dtype=np.int64)


def reference_transpose(src: np.ndarray) -> np.ndarray:
    rows = src.tolist()
    return np.array([list(col) for col in zip(*rows)], dtype=np.float32).reshape(src.shape[::-1])


def reference_batched_gemm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # float64 accumulation, independent of any tuning parameter
    return np.einsum("nji,nik->njk", a.astype(np.float64), b.astype(np.float64)).astype(np.float32)


# -- kernels --------------------------------------------------------------------------

def _reduction_kernel(impl, n: int):
    scratch = np.zeros(n // 256 + 1, dtype=np.int64)

    def run(cfg, buf):
        x = buf["x"]
        start = time.perf_counter_ns()
        total = impl.reduce_sum(x, cfg["CHUNK"], cfg["UNROLL"], bool(cfg["TWO_PHASE"]), scratch)
        elapsed = time.perf_counter_ns() - start
        buf["sum"][0] = total
        return max(elapsed, 1)

    return run


def _transpose_kernel(impl):
    scratch = np.zeros(64 * 65, dtype=np.float32)

    def run(cfg, buf):
        start = time.perf_counter_ns()
        impl.transpose(buf["src"], buf["dst"], cfg["TILE"], cfg["PAD"], bool(cfg["PREFETCH"]), scratch)
        return max(time.perf_counter_ns() - start, 1)

    return run


def _gemm_kernel(impl, j: int, k: int):
    scratch = np.zeros(8 * j * k, dtype=np.float32)

    def run(cfg, buf):
        start = time.perf_counter_ns()
        impl.batched_gemm(buf["A"], buf["B"], buf["C"], cfg["Y"], cfg["Z"], bool(cfg["LOCAL_STAGE"]), scratch)
        return max(time.perf_counter_ns() - start, 1)

    return run


def make_bench(kind: str, sizes: Mapping[str, int] | None = None, seed: int = 0,
               memory_budget: int = DEFAULT_MEMORY_BUDGET, backend: str | None = None) -> BenchBinding:
    """Build a benchmark problem, its tuning space and an in-process executor."""
    space = bench_space(kind)
    s = _sizes(kind, sizes)
    need = _footprint(kind, s)
    if need > memory_budget:
        raise KtuneError(f"{kind} with {s} needs {need} bytes, over the memory budget of {memory_budget}")
    impl = _backend.get(backend)
    backend = backend or _backend.DEFAULT
    rng = np.random.default_rng(seed)

    if kind == "reduction":
        x = rng.integers(-1000, 1001, size=s["n"], dtype=np.int32)
        inputs = {"x": x}
        expected = {"sum": reference_sum(x)}
        args = [ArgumentDescriptor("x", "input", x, element_kind="i32"),
                ArgumentDescriptor("sum", "output", np.zeros(1, dtype=np.int64), element_kind="i64")]
        fn = _reduction_kernel(impl, s["n"])
        tol = {}
    elif kind == "transpose":
        src = rng.standard_normal((s["a"], s["a"]), dtype=np.float32)
        inputs = {"src": src}
        expected = {"dst": reference_transpose(src)}
        args = [ArgumentDescriptor("src", "input", src, element_kind="f32"),
                ArgumentDescriptor("dst", "output", np.zeros_like(src), element_kind="f32")]
        fn = _transpose_kernel(impl)
        tol = FLOAT_TOLERANCE
    else:
        a = rng.standard_normal((s["batch"], s["j"], s["i"]), dtype=np.float32)
        b = rng.standard_normal((s["batch"], s["i"], s["k"]), dtype=np.float32)
        inputs = {"A": a, "B": b}
        expected = {"C": reference_batched_gemm(a, b)}
        c = np.zeros((s["batch"], s["j"], s["k"]), dtype=np.float32)
        args = [ArgumentDescriptor("A", "input", a, element_kind="f32"),
                ArgumentDescriptor("B", "input", b, element_kind="f32"),
                ArgumentDescriptor("C", "output", c, element_kind="f32")]
        fn = _gemm_kernel(impl, s["j"], s["k"])
        tol = FLOAT_TOLERANCE

    problem = BenchProblem(kind, s, seed, inputs, expected)
    kernel = KernelDefinition(kind, f"bench:{kind}", kind)
    reference = ReferenceSpec(golden=expected, **tol)
    return BenchBinding(problem, space, kernel, args, CallableExecutor({kind: fn}), reference, backend)
