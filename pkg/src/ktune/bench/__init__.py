"""Tunable CPU benchmarks and the dynamic-tuning demo."""
from ._backend import BACKENDS, DEFAULT as DEFAULT_BACKEND
from .demo import DemoReport, dynamic_demo, synthetic_gemm_trace
from .problems import KINDS, BenchBinding, BenchProblem, bench_space, make_bench

__all__ = ["BACKENDS", "DEFAULT_BACKEND", "DemoReport", "dynamic_demo", "synthetic_gemm_trace",
           "KINDS", "BenchBinding", "BenchProblem", "bench_space", "make_bench"]
