"""Executors: render a configuration into runnable code, run it, time it, validate it.

Three executors ship with the engine:

* :class:`CommandExecutor` renders a source template, runs a compile command
  and a run command as subprocesses, and collects output files.
* :class:`ReplayExecutor` answers from a recorded trace (optionally with
  seeded multiplicative noise), for search experiments without hardware.
* :class:`CallableExecutor` runs in-process Python kernels.

The built-in benchmarks in :mod:`ktune.bench` provide a fourth.
"""
from __future__ import annotations

import math
import os
import re
import statistics
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol, Sequence

import numpy as np

from .errors import KtuneError
from .search import Measurement, Status
from .space import Configuration
from .trace import Trace

PLACEHOLDER = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")
TIME_LINE = re.compile(r"^KTUNE_TIME_NS=(\d+)\s*$", re.MULTILINE)

ELEMENT_DTYPES = {
    "i32": np.dtype(np.int32),
    "i64": np.dtype(np.int64),
    "f32": np.dtype(np.float32),
    "f64": np.dtype(np.float64),
    "bytes": np.dtype(np.uint8),
}
ROLES = ("input", "output", "inout", "scalar")
CONVENTIONS = ("flat_global", "blocks_threads")


@dataclass
class ArgumentDescriptor:
    """A kernel argument.

    Buffers are numpy arrays; ``element_kind`` is inferred from the dtype when
    omitted. Persistent arguments stay on the engine side after execution and
    are only read back through an explicit download.
    """

    id: str
    role: str
    payload: Any
    persistent: bool = False
    element_kind: str | None = None

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"argument {self.id}: unknown role {self.role!r}")
        if self.role == "scalar":
            if self.element_kind is None:
                self.element_kind = "f64" if isinstance(self.payload, float) else "i64"
            return
        if isinstance(self.payload, (bytes, bytearray)):
            self.payload = np.frombuffer(bytes(self.payload), dtype=np.uint8).copy()
            self.element_kind = self.element_kind or "bytes"
        if not isinstance(self.payload, np.ndarray):
            raise ValueError(f"argument {self.id}: buffer payload must be a numpy array or bytes")
        if self.element_kind is None:
            kind = {v: k for k, v in ELEMENT_DTYPES.items()}.get(self.payload.dtype)
            if kind is None:
                raise ValueError(f"argument {self.id}: unsupported dtype {self.payload.dtype}")
            self.element_kind = kind
        elif self.element_kind not in ELEMENT_DTYPES:
            raise ValueError(f"argument {self.id}: unknown element kind {self.element_kind!r}")

    @property
    def dtype(self) -> np.dtype:
        return ELEMENT_DTYPES[self.element_kind]

    def copy(self) -> "ArgumentDescriptor":
        payload = self.payload.copy() if isinstance(self.payload, np.ndarray) else self.payload
        return ArgumentDescriptor(self.id, self.role, payload, self.persistent, self.element_kind)


@dataclass(frozen=True)
class KernelDefinition:
    name: str
    source: str = ""
    entry: str = ""
    global_size: tuple[int, int, int] = (1, 1, 1)
    local_size: tuple[int, int, int] = (1, 1, 1)
    dims_convention: str = "flat_global"

    def __post_init__(self):
        object.__setattr__(self, "global_size", _dims(self.global_size))
        object.__setattr__(self, "local_size", _dims(self.local_size))
        if self.dims_convention not in CONVENTIONS:
            raise ValueError(f"unknown dims convention {self.dims_convention!r}")
        if not self.entry:
            object.__setattr__(self, "entry", self.name)


def _dims(v) -> tuple[int, int, int]:
    v = tuple(int(x) for x in (v if isinstance(v, (tuple, list)) else (v,)))
    if len(v) > 3:
        raise ValueError("at most 3 dimensions")
    return v + (1,) * (3 - len(v))


@dataclass
class ExecutionResult:
    measurement: Measurement
    outputs: dict[str, np.ndarray] = field(default_factory=dict)
    sources: dict[str, str] = field(default_factory=dict)

    @property
    def status(self) -> Status:
        return self.measurement.status


@dataclass(frozen=True)
class ReferenceSpec:
    """Expected outputs, either as golden buffers or as a producer ``inputs -> outputs``."""

    producer: Callable[[Mapping[str, Any]], Mapping[str, np.ndarray]] | None = None
    golden: Mapping[str, np.ndarray] | None = None
    abs_tol: float = 0.0
    rel_tol: float = 0.0

    def __post_init__(self):
        if (self.producer is None) == (self.golden is None):
            raise ValueError("reference needs exactly one of producer or golden")
        if self.abs_tol < 0 or self.rel_tol < 0:
            raise ValueError("tolerances must be >= 0")

    def expected(self, inputs: Mapping[str, Any] | None = None) -> dict[str, np.ndarray]:
        if self.golden is not None:
            return {k: np.asarray(v) for k, v in self.golden.items()}
        return {k: np.asarray(v) for k, v in self.producer(inputs or {}).items()}


@dataclass(frozen=True)
class Validation:
    passed: bool
    detail: str = ""
    argument: str | None = None
    index: int | None = None

    def __bool__(self) -> bool:
        return self.passed


class Executor(Protocol):
    def execute(self, kernel: KernelDefinition, cfg: Configuration,
                args: Mapping[str, ArgumentDescriptor]) -> ExecutionResult: ...


# -- source rendering ---------------------------------------------------------

def definition_block(cfg: Configuration) -> str:
    return "\n".join(f"#define {n} {v}" for n, v in cfg.items())


def substitute(template: str, values: Mapping[str, Any]) -> str:
    def repl(m):
        name = m.group(1)
        if name not in values:
            raise KtuneError(f"unresolved placeholder {name}")
        return str(values[name])

    return PLACEHOLDER.sub(repl, template)


def render_source(template: str, cfg: Configuration) -> str:
    """Prepend one ``#define NAME VALUE`` line per parameter and fill ``${NAME}`` placeholders."""
    body = substitute(template, cfg)
    block = definition_block(cfg)
    return f"{block}\n{body}" if block else body


def translate_parallelism(k: KernelDefinition, target: str) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Convert (global, local) extents between NDRange-style and blocks/threads-style."""
    if target not in CONVENTIONS:
        raise ValueError(f"unknown dims convention {target!r}")
    if any(x < 1 for x in k.local_size):
        raise ValueError("local extent must be >= 1")
    if any(x < 1 for x in k.global_size):
        raise ValueError("global extent must be >= 1")
    if k.dims_convention == target:
        return k.global_size, k.local_size
    if target == "blocks_threads":
        blocks = tuple(-(-g // l) for g, l in zip(k.global_size, k.local_size))
        return blocks, k.local_size
    return tuple(b * t for b, t in zip(k.global_size, k.local_size)), k.local_size


# -- validation ----------------------------------------------------------------

def _compare_buffers(name, actual, expected, ref: ReferenceSpec) -> Validation:
    a = np.asarray(actual).reshape(-1)
    b = np.asarray(expected).reshape(-1)
    if a.size != b.size:
        return Validation(False, f"{name}: length mismatch ({a.size} != {b.size})", name)
    if np.issubdtype(a.dtype, np.floating) or np.issubdtype(b.dtype, np.floating):
        af, bf = a.astype(np.float64), b.astype(np.float64)
        with np.errstate(invalid="ignore"):
            good = np.abs(af - bf) <= ref.abs_tol + ref.rel_tol * np.abs(bf)
        # equal infinities and NaN-for-NaN count as matches
        good |= (af == bf) | (np.isnan(af) & np.isnan(bf))
    else:
        good = a == b
    if good.all():
        return Validation(True)
    idx = int(np.argmin(good))
    return Validation(False, f"{name}[{idx}]: got {a[idx]!r}, expected {b[idx]!r}", name, idx)


def validate_output(result: ExecutionResult, ref: ReferenceSpec,
                    inputs: Mapping[str, Any] | None = None,
                    expected: Mapping[str, np.ndarray] | None = None) -> Validation:
    """Compare every buffer the reference names against the result's outputs.

    ``expected`` short-circuits the reference producer when the caller has
    already computed it.
    """
    if expected is None:
        expected = ref.expected(inputs)
    for name, exp in expected.items():
        if name not in result.outputs:
            return Validation(False, f"{name}: missing output", name)
        v = _compare_buffers(name, result.outputs[name], exp, ref)
        if not v:
            return v
    return Validation(True)


# -- executors -------------------------------------------------------------------

def _median_ns(values: Sequence[int]) -> int:
    return int(round(statistics.median(values)))


class CommandExecutor:
    """Compile-and-run through shell commands.

    Command templates may use ``${NAME}`` for any parameter and ``${SRC}`` for
    the rendered source path. The child also receives ``KTUNE_P_<NAME>``
    environment variables. A ``KTUNE_TIME_NS=<int>`` line on the run
    command's stdout overrides the wall-clock runtime.
    """

    def __init__(self, compile_template: str | None, run_template: str, workdir: str | Path = ".",
                 *, input_files: Mapping[str, str] | None = None,
                 output_files: Mapping[str, str] | None = None,
                 source_suffix: str = ".src", timeout: float = 60.0, repeats: int = 1):
        if repeats < 1:
            raise ValueError("repeats must be >= 1")
        self.compile_template = compile_template or None
        self.run_template = run_template
        self.workdir = Path(workdir)
        self.input_files = dict(input_files or {})
        self.output_files = dict(output_files or {})
        self.source_suffix = source_suffix
        self.timeout = timeout
        self.repeats = repeats

    def _env(self, cfg, src):
        env = dict(os.environ)
        for n, v in cfg.items():
            env[f"KTUNE_P_{n}"] = str(v)
        env["KTUNE_SRC"] = str(src)
        return env

    def _run(self, command, env):
        start = time.perf_counter_ns()
        try:
            proc = subprocess.run(command, shell=True, cwd=self.workdir, env=env,
                                  capture_output=True, text=True, timeout=self.timeout)
        except subprocess.TimeoutExpired:
            return None, time.perf_counter_ns() - start, f"timeout after {self.timeout}s"
        return proc, time.perf_counter_ns() - start, ""

    def execute(self, kernel: KernelDefinition, cfg: Configuration,
                args: Mapping[str, ArgumentDescriptor]) -> ExecutionResult:
        self.workdir.mkdir(parents=True, exist_ok=True)
        src = (self.workdir / f"{kernel.name}{self.source_suffix}").resolve()
        source = render_source(kernel.source, cfg)
        src.write_text(source)
        sources = {kernel.name: source}
        values = dict(cfg.items(), SRC=str(src))
        env = self._env(cfg, src)
        for arg_id, fname in self.input_files.items():
            if arg_id in args:
                a = args[arg_id]
                np.asarray(a.payload, dtype=a.dtype).tofile(self.workdir / fname)

        compile_ns = 0
        if self.compile_template:
            proc, compile_ns, why = self._run(substitute(self.compile_template, values), env)
            if proc is None or proc.returncode != 0:
                detail = why or f"compile exited {proc.returncode}: {proc.stderr.strip()[-400:]}"
                return ExecutionResult(Measurement(cfg, Status.COMPILE_FAILED, None, compile_ns, detail),
                                       sources=sources)

        runtimes = []
        run_cmd = substitute(self.run_template, values)
        for _ in range(self.repeats):
            for fname in self.output_files.values():
                (self.workdir / fname).unlink(missing_ok=True)
            proc, wall, why = self._run(run_cmd, env)
            if proc is None or proc.returncode != 0:
                detail = why or f"run exited {proc.returncode}: {proc.stderr.strip()[-400:]}"
                return ExecutionResult(Measurement(cfg, Status.RUN_FAILED, None, compile_ns, detail),
                                       sources=sources)
            reported = TIME_LINE.findall(proc.stdout)
            runtimes.append(int(reported[-1]) if reported else wall)

        outputs = {}
        for arg_id, fname in self.output_files.items():
            path = self.workdir / fname
            if not path.exists():
                return ExecutionResult(Measurement(cfg, Status.RUN_FAILED, None, compile_ns,
                                                   f"missing output file {fname}"), sources=sources)
            kind = args[arg_id].element_kind if arg_id in args else "bytes"
            outputs[arg_id] = np.fromfile(path, dtype=ELEMENT_DTYPES[kind])
        runtime = max(_median_ns(runtimes), 1)
        return ExecutionResult(Measurement(cfg, Status.OK, runtime, compile_ns), outputs, sources)


class ReplayExecutor:
    """Answers executions from a recorded trace.

    ``noise`` is the relative standard deviation of a mean-one lognormal factor
    applied to recorded runtimes; draws come from a generator seeded with
    ``seed``, so identical call sequences reproduce identical measurements.
    """

    def __init__(self, trace: Trace, noise: float = 0.0, seed: int = 0):
        if noise < 0:
            raise ValueError("noise must be >= 0")
        self.trace = trace
        self.noise = noise
        self.rng = np.random.default_rng(seed)
        if noise > 0:
            self._sigma = math.sqrt(math.log1p(noise * noise))
        else:
            self._sigma = 0.0

    def factor(self) -> float:
        if self._sigma == 0.0:
            return 1.0
        return float(self.rng.lognormal(-0.5 * self._sigma ** 2, self._sigma))

    def execute(self, kernel: KernelDefinition, cfg: Configuration,
                args: Mapping[str, ArgumentDescriptor]) -> ExecutionResult:
        row = self.trace.lookup(cfg)
        if row is None:
            return ExecutionResult(Measurement(cfg, Status.RUN_FAILED, None, None, "not in trace"))
        if row.status is not Status.OK:
            return ExecutionResult(Measurement(cfg, row.status, None, row.compile_ns, "recorded failure"))
        runtime = row.runtime_ns
        if self._sigma:
            runtime = max(1, int(round(runtime * self.factor())))
        return ExecutionResult(Measurement(cfg, Status.OK, runtime, row.compile_ns))


def execute_replay(cfg: Configuration, trace: Trace, noise: float = 0.0, seed: int = 0) -> ExecutionResult:
    return ReplayExecutor(trace, noise, seed).execute(KernelDefinition("replay", "replay:"), cfg, {})


def execute_command(cfg: Configuration, compile_template: str | None, run_template: str,
                    workdir: str | Path, source: str = "", **kwargs) -> ExecutionResult:
    kernel = KernelDefinition("kernel", source)
    args = kwargs.pop("args", {})
    return CommandExecutor(compile_template, run_template, workdir, **kwargs).execute(kernel, cfg, args)


class CallableExecutor:
    """In-process kernels: ``functions[kernel.name](params, buffers)``.

    The function gets the configuration and a dict of argument payloads; it
    writes results into output buffers in place. Runtime is wall time around
    the call unless the function returns an integer number of nanoseconds.
    """

    def __init__(self, functions: Mapping[str, Callable] | Callable):
        self.functions = functions

    def execute(self, kernel: KernelDefinition, cfg: Configuration,
                args: Mapping[str, ArgumentDescriptor]) -> ExecutionResult:
        fn = self.functions if callable(self.functions) else self.functions[kernel.name]
        buffers = {k: a.payload for k, a in args.items()}
        start = time.perf_counter_ns()
        try:
            reported = fn(cfg, buffers)
        except Exception as exc:  # a failing variant is a measurement, not a crash
            return ExecutionResult(Measurement(cfg, Status.RUN_FAILED, None, 0, f"{type(exc).__name__}: {exc}"))
        wall = time.perf_counter_ns() - start
        runtime = reported if isinstance(reported, int) and not isinstance(reported, bool) else wall
        outputs = {k: np.asarray(buffers[k]) for k, a in args.items() if a.role in ("output", "inout")}
        return ExecutionResult(Measurement(cfg, Status.OK, max(int(runtime), 1), 0), outputs)
