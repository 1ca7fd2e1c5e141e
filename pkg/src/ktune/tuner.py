"""Tuning sessions: offline tuning, step-wise dynamic tuning and run mode.

A :class:`Tuner` owns one tuning space, one executor and a set of registered
arguments. Kernels and kernel compositions are registered as handles; every
handle keeps its own result history and searcher.

Buffer semantics
    ``tune()`` is blocking: each step works on copies of the application
    buffers, so the application never sees tuning side effects.
    ``tune_kernel_by_step()`` and ``run_kernel()`` hand the requested outputs
    back and write them into the application's buffers. Persistent arguments
    live engine-side and are only read back through :meth:`Tuner.download`.

Concurrency
    Tuning steps are exclusive. ``run_kernel`` calls may overlap each other but
    wait for any in-flight tuning step.
"""
from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import ExecutionError, KtuneError
from .executors import (ArgumentDescriptor, ExecutionResult, Executor, KernelDefinition,
                        ReferenceSpec, validate_output)
from .model import DeviceSpec, efficiency
from .search import Measurement, SearcherKind, Status, make_searcher
from .space import Configuration, TuningSpace
from .trace import Trace

log = logging.getLogger(__name__)


# -- stop conditions ---------------------------------------------------------------

class StopCondition:
    def reached(self, store: "ResultStore", elapsed_s: float) -> bool:
        raise NotImplementedError

    def __or__(self, other: "StopCondition") -> "AnyOf":
        return AnyOf((self, other))


@dataclass(frozen=True)
class ConfigBudget(StopCondition):
    max_configs: int

    def __post_init__(self):
        if self.max_configs < 1:
            raise ValueError("max_configs must be >= 1")

    def reached(self, store, elapsed_s):
        return len(store) >= self.max_configs


@dataclass(frozen=True)
class TimeBudget(StopCondition):
    seconds: float

    def __post_init__(self):
        if not self.seconds > 0:
            raise ValueError("time budget must be > 0")

    def reached(self, store, elapsed_s):
        return elapsed_s >= self.seconds


@dataclass(frozen=True)
class PerformanceThreshold(StopCondition):
    """Stop once the best configuration reaches ``fraction`` of the device peak."""

    fraction: float
    device: DeviceSpec
    mem_ops: float = 0
    alu_ops: float = 0

    def __post_init__(self):
        if not 0 < self.fraction <= 1:
            raise ValueError("threshold fraction must be in (0, 1]")

    def reached(self, store, elapsed_s):
        best = store.best
        if best is None:
            return False
        return efficiency(best.runtime_ns, self.mem_ops, self.alu_ops, self.device) >= 100 * self.fraction


@dataclass(frozen=True)
class Exhaustive(StopCondition):
    def reached(self, store, elapsed_s):
        return False


@dataclass(frozen=True)
class AnyOf(StopCondition):
    conditions: tuple[StopCondition, ...]

    def reached(self, store, elapsed_s):
        return any(c.reached(store, elapsed_s) for c in self.conditions)

    def __or__(self, other):
        return AnyOf(self.conditions + (other,))


# -- results ------------------------------------------------------------------------------

class ResultStore:
    """Append-only measurement history of one handle, with the running best."""

    def __init__(self, space_sha256: str = "", device: str = "unknown",
                 searcher: str = "random", seed: int = 0):
        self.space_sha256 = space_sha256
        self.device = device
        self.searcher = searcher
        self.seed = seed
        self.warning: str | None = None
        self._history: list[Measurement] = []
        self._spans: list[tuple[int, int]] = []
        self._best: Measurement | None = None
        self._lock = threading.Lock()

    def append(self, m: Measurement, span: tuple[int, int] | None = None) -> None:
        with self._lock:
            self._history.append(m)
            self._spans.append(span or (0, 0))
            if m.status is Status.OK and (self._best is None or m.runtime_ns < self._best.runtime_ns):
                self._best = m

    @property
    def history(self) -> tuple[Measurement, ...]:
        with self._lock:
            return tuple(self._history)

    @property
    def spans(self) -> tuple[tuple[int, int], ...]:
        """(start, end) monotonic timestamps of each recorded step."""
        with self._lock:
            return tuple(self._spans)

    @property
    def best(self) -> Measurement | None:
        return self._best

    def __len__(self) -> int:
        return len(self._history)

    def to_trace(self) -> Trace:
        return Trace.from_measurements(self.history, self.device, self.space_sha256)

    @property
    def metadata(self) -> dict:
        return {"space_sha256": self.space_sha256, "device": self.device,
                "searcher": self.searcher, "seed": self.seed}


# -- sessions -------------------------------------------------------------------------------

class _RWLock:
    """Shared run-mode access, exclusive tuning steps."""

    def __init__(self):
        self._cond = threading.Condition()
        self._readers = 0
        self._writer = False

    def acquire_read(self):
        with self._cond:
            while self._writer:
                self._cond.wait()
            self._readers += 1

    def release_read(self):
        with self._cond:
            self._readers -= 1
            self._cond.notify_all()

    def acquire_write(self):
        with self._cond:
            while self._writer or self._readers:
                self._cond.wait()
            self._writer = True

    def release_write(self):
        with self._cond:
            self._writer = False
            self._cond.notify_all()


class _StepFailed(Exception):
    def __init__(self, result: ExecutionResult):
        self.result = result


class StepContext:
    """What a manipulator sees during one step."""

    def __init__(self, tuner: "Tuner", handle: "_Handle", cfg: Configuration,
                 buffers: dict[str, ArgumentDescriptor]):
        self._tuner = tuner
        self._handle = handle
        self.configuration = cfg
        self._buffers = buffers
        self.kernel_ns = 0
        self.compile_ns = 0
        self.executor_wall_ns = 0
        self.sources: dict[str, str] = {}

    @property
    def params(self) -> Configuration:
        return self.configuration

    def run_kernel(self, kernel: str | KernelDefinition) -> None:
        name = kernel.name if isinstance(kernel, KernelDefinition) else kernel
        kdef = self._handle.kernel(name)
        ids = self._handle.arguments.get(name, ())
        args = {i: self._buffers[i] for i in ids}
        start = time.perf_counter_ns()
        result = self._tuner.executor.execute(kdef, self.configuration, args)
        self.executor_wall_ns += time.perf_counter_ns() - start
        self.sources.update(result.sources)
        m = result.measurement
        self.compile_ns += m.compile_ns or 0
        if m.status is not Status.OK:
            raise _StepFailed(result)
        self.kernel_ns += m.runtime_ns
        for arg_id, data in result.outputs.items():
            if arg_id in self._buffers:
                _store(self._buffers[arg_id], data)

    def upload(self, arg_id: str, data) -> None:
        _store(self._buffers[arg_id], np.asarray(data))

    def download(self, arg_id: str):
        payload = self._buffers[arg_id].payload
        return payload.copy() if isinstance(payload, np.ndarray) else payload

    def buffer(self, arg_id: str):
        return self._buffers[arg_id].payload


def _store(arg: ArgumentDescriptor, data) -> None:
    data = np.asarray(data)
    if isinstance(arg.payload, np.ndarray) and arg.payload.size == data.size:
        arg.payload.reshape(-1)[...] = data.reshape(-1).astype(arg.payload.dtype, copy=False)
    else:
        arg.payload = data.astype(arg.dtype, copy=True) if arg.role != "scalar" else data


@dataclass
class _Handle:
    id: str
    kernels: list[KernelDefinition]
    arguments: dict[str, list[str]]
    manipulator: Any = None
    reference: ReferenceSpec | None = None
    store: ResultStore = field(default_factory=ResultStore)
    searcher: Any = None
    seed: int = 0
    started: float | None = None
    expected: dict | None = None

    def kernel(self, name: str) -> KernelDefinition:
        for k in self.kernels:
            if k.name == name:
                return k
        raise KtuneError(f"handle {self.id} has no kernel {name}")

    def argument_ids(self) -> list[str]:
        seen = []
        for ids in self.arguments.values():
            for i in ids:
                if i not in seen:
                    seen.append(i)
        return seen


class Tuner:
    """A tuning session over one space, one executor and one device."""

    def __init__(self, space: TuningSpace, executor: Executor,
                 searcher: SearcherKind | str = "random", seed: int = 0, device: str = "unknown"):
        if space.cardinality() == 0:
            raise KtuneError("empty tuning space")
        self.space = space
        self.executor = executor
        self.searcher_kind = SearcherKind(searcher) if isinstance(searcher, str) else searcher
        self.seed = seed
        self.device = device
        self._space_sha = space.sha256()
        self._args: dict[str, ArgumentDescriptor] = {}
        self._device_buffers: dict[str, ArgumentDescriptor] = {}
        self._handles: dict[str, _Handle] = {}
        self._lock = _RWLock()

    # -- registration ---------------------------------------------------------------
    def add_argument(self, arg: ArgumentDescriptor | str, role: str | None = None, payload=None,
                     persistent: bool = False, element_kind: str | None = None) -> str:
        if not isinstance(arg, ArgumentDescriptor):
            arg = ArgumentDescriptor(arg, role, payload, persistent, element_kind)
        if arg.id in self._args:
            raise KtuneError(f"argument {arg.id} already registered")
        self._args[arg.id] = arg
        if arg.persistent:
            self._device_buffers[arg.id] = arg.copy()
        for h in self._handles.values():
            h.expected = None
        return arg.id

    def _check_args(self, ids: Iterable[str]) -> None:
        for i in ids:
            if i not in self._args:
                raise KtuneError(f"argument {i} is not registered")

    def _new_handle(self, hid, kernels, arguments, manipulator) -> str:
        if hid in self._handles:
            raise KtuneError(f"handle {hid} already exists")
        for ids in arguments.values():
            self._check_args(ids)
        handle = _Handle(hid, list(kernels), {k: list(v) for k, v in arguments.items()},
                         manipulator, seed=self.seed)
        self._handles[hid] = handle
        self.reset_tuning(hid)
        return hid

    def add_kernel(self, kernel: KernelDefinition, arguments: Sequence[str] = ()) -> str:
        return self._new_handle(kernel.name, [kernel], {kernel.name: list(arguments)}, None)

    def add_composition(self, name: str, kernels: Sequence[KernelDefinition], manipulator=None,
                        arguments: Mapping[str, Sequence[str]] | None = None) -> str:
        """Kernels sharing this session's tuning parameters, run by an optional manipulator.

        ``manipulator`` is a callable or an object with ``launch_computation``;
        it receives a :class:`StepContext`. Without one, kernels run in order.
        """
        if not kernels:
            raise KtuneError("composition needs at least one kernel")
        arguments = dict(arguments or {})
        for k in kernels:
            arguments.setdefault(k.name, [])
        return self._new_handle(name, kernels, arguments, manipulator)

    def set_composition_kernel_arguments(self, handle: str, kernel: str, ids: Sequence[str]) -> None:
        self._check_args(ids)
        h = self._handle(handle)
        h.kernel(kernel)
        h.arguments[kernel] = list(ids)

    def set_reference(self, handle: str, reference: ReferenceSpec | None) -> None:
        h = self._handle(handle)
        h.reference = reference
        h.expected = None

    def _handle(self, hid: str) -> _Handle:
        try:
            return self._handles[hid]
        except KeyError:
            raise KtuneError(f"unknown handle {hid}") from None

    def reset_tuning(self, handle: str, seed: int | None = None) -> None:
        """Forget the handle's history and restart its search."""
        h = self._handle(handle)
        if seed is not None:
            h.seed = seed
        h.store = ResultStore(self._space_sha, self.device, self.searcher_kind.tag, h.seed)
        h.searcher = make_searcher(self.searcher_kind, self.space, h.seed)
        h.started = None

    def results(self, handle: str) -> ResultStore:
        return self._handle(handle).store

    # -- buffers ------------------------------------------------------------------------
    def upload(self, arg_id: str, data) -> None:
        arg = self._args[arg_id]
        target = self._device_buffers.get(arg_id, arg)
        _store(target, data)
        if target is not arg:
            _store(arg, data)
        for h in self._handles.values():
            h.expected = None

    def download(self, arg_id: str):
        """Explicit read-back (the only way to see a persistent argument's device copy)."""
        arg = self._device_buffers.get(arg_id) or self._args[arg_id]
        return arg.payload.copy() if isinstance(arg.payload, np.ndarray) else arg.payload

    def _working_buffers(self, h: _Handle) -> dict[str, ArgumentDescriptor]:
        out = {}
        for i in h.argument_ids():
            src = self._device_buffers.get(i, self._args[i])
            out[i] = src.copy()
        return out

    def _commit(self, h: _Handle, buffers, output_ids: Sequence[str]) -> dict[str, np.ndarray]:
        for i, arg in buffers.items():
            if i in self._device_buffers:
                self._device_buffers[i] = arg
        outputs = {}
        for i in output_ids:
            arg = self._args.get(i)
            if arg is None:
                raise KtuneError(f"argument {i} is not registered")
            if arg.persistent or arg.role not in ("output", "inout") or i not in buffers:
                continue
            _store(arg, buffers[i].payload)
            outputs[i] = arg.payload.copy()
        return outputs

    # -- execution core --------------------------------------------------------------
    def _expected(self, h: _Handle):
        if h.expected is None:
            inputs = {i: a.payload for i, a in self._args.items() if a.role in ("input", "inout", "scalar")}
            h.expected = h.reference.expected(inputs)
        return h.expected

    def _execute(self, h: _Handle, cfg: Configuration):
        buffers = self._working_buffers(h)
        ctx = StepContext(self, h, cfg, buffers)
        failure = None
        start = time.perf_counter_ns()
        try:
            if h.manipulator is not None:
                launch = getattr(h.manipulator, "launch_computation", h.manipulator)
                launch(ctx)
            else:
                for k in h.kernels:
                    ctx.run_kernel(k.name)
        except _StepFailed as exc:
            failure = exc.result
        wall = time.perf_counter_ns() - start
        if failure is not None:
            m = failure.measurement
            m = Measurement(cfg, m.status, None, ctx.compile_ns, m.detail)
            return ExecutionResult(m, {}, ctx.sources), buffers
        host_ns = max(wall - ctx.executor_wall_ns, 0) if h.manipulator is not None else 0
        runtime = max(ctx.kernel_ns + host_ns, 1)
        outputs = {i: a.payload for i, a in buffers.items() if a.role in ("output", "inout")}
        m = Measurement(cfg, Status.OK, runtime, ctx.compile_ns)
        result = ExecutionResult(m, outputs, ctx.sources)
        if h.reference is not None:
            v = validate_output(result, h.reference, expected=self._expected(h))
            if not v:
                result.measurement = Measurement(cfg, Status.VALIDATION_FAILED, None, ctx.compile_ns,
                                                 v.detail)
        return result, buffers

    def _step(self, h: _Handle, cfg: Configuration):
        self._lock.acquire_write()
        try:
            if h.started is None:
                h.started = time.monotonic()
            start = time.monotonic_ns()
            result, buffers = self._execute(h, cfg)
            h.store.append(result.measurement, (start, time.monotonic_ns()))
            h.searcher.observe(result.measurement)
        finally:
            self._lock.release_write()
        return result, buffers

    # -- public operations ----------------------------------------------------------
    def tune(self, handle: str, stop: StopCondition | None = None) -> ResultStore:
        """Blocking tuning: step through configurations until ``stop`` fires or the space is exhausted."""
        h = self._handle(handle)
        stop = stop or Exhaustive()
        started = time.monotonic()
        while True:
            cfg = h.searcher.propose()
            if cfg is None:
                break
            self._step(h, cfg)
            if stop.reached(h.store, time.monotonic() - started):
                break
        if h.store.best is None:
            h.store.warning = "all configurations failed"
            log.warning("handle %s: all %d measured configurations failed", handle, len(h.store))
        return h.store

    def tune_kernel_by_step(self, handle: str, output_ids: Sequence[str] = ()):
        """One non-blocking tuning step; returns ``(outputs, measurement)``.

        Once the space is exhausted this runs the fastest known configuration
        instead (without recording it).
        """
        h = self._handle(handle)
        cfg = h.searcher.propose()
        if cfg is None:
            best = h.store.best
            if best is None:
                raise ExecutionError(f"handle {handle}: no configuration succeeded")
            result = self.execute_configuration(handle, best.configuration, output_ids)
            return result.outputs, result.measurement
        result, buffers = self._step(h, cfg)
        if result.measurement.status is not Status.OK:
            return {}, result.measurement
        return self._commit(h, buffers, output_ids), result.measurement

    def execute_configuration(self, handle: str, cfg: Configuration,
                              output_ids: Sequence[str] = ()) -> ExecutionResult:
        """Run mode with the full execution result (measurement not recorded)."""
        h = self._handle(handle)
        if not self.space.is_valid(cfg):
            raise ExecutionError(f"invalid configuration {cfg}")
        self._lock.acquire_read()
        try:
            result, buffers = self._execute(h, cfg)
            if result.measurement.status is not Status.OK:
                raise ExecutionError(f"{cfg}: {result.measurement.status}: {result.measurement.detail}")
            result.outputs = self._commit(h, buffers, output_ids)
        finally:
            self._lock.release_read()
        return result

    def run_kernel(self, handle: str, cfg: Configuration, output_ids: Sequence[str] = ()):
        return self.execute_configuration(handle, cfg, output_ids).outputs

    def get_best_computation_result(self, handle: str):
        best = self._handle(handle).store.best
        return None if best is None else (best.configuration, best)

    def should_stop(self, handle: str, stop: StopCondition) -> bool:
        h = self._handle(handle)
        elapsed = 0.0 if h.started is None else time.monotonic() - h.started
        return h.searcher.exhausted or stop.reached(h.store, elapsed)

    # -- persistence ---------------------------------------------------------------------
    def export_trace(self, handle: str) -> Trace:
        return self._handle(handle).store.to_trace()

    def import_trace(self, handle: str, trace: Trace) -> int:
        """Warm start: record a previous session's measurements; returns rows imported."""
        h = self._handle(handle)
        count = 0
        for row in trace.rows:
            try:
                cfg = self.space.configuration(row.cfg)
            except KtuneError:
                continue
            if cfg in h.searcher.visited or not self.space.satisfies(cfg):
                continue
            m = Measurement(cfg, row.status, row.runtime_ns, row.compile_ns, "imported")
            h.store.append(m)
            h.searcher.observe(m)
            count += 1
        return count


def create_session(executor: Executor, space: TuningSpace, searcher: SearcherKind | str = "random",
                   seed: int = 0, device: str = "unknown") -> Tuner:
    return Tuner(space, executor, searcher, seed, device)
