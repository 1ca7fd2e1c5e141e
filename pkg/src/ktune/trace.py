"""JSON Lines trace files: a header line followed by one line per measurement.

::

    {"kind": "ktune-trace", "v": 1, "device": "gtx1070", "space_sha256": "ab12..."}
    {"cfg": {"TILE": 16}, "runtime_ns": 1200, "compile_ns": 350, "status": "ok"}
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .errors import TraceError
from .search import Measurement, Status
from .space import Constraint, ParameterDomain, TuningSpace

TRACE_KIND = "ktune-trace"
TRACE_VERSION = 1


def _key(cfg: Mapping) -> tuple:
    return tuple(sorted(cfg.items()))


@dataclass(frozen=True)
class TraceRow:
    cfg: dict
    runtime_ns: int | None
    compile_ns: int | None
    status: Status

    def to_json(self) -> str:
        return json.dumps({"cfg": self.cfg, "runtime_ns": self.runtime_ns,
                           "compile_ns": self.compile_ns, "status": self.status.value})


@dataclass
class Trace:
    device: str = "unknown"
    space_sha256: str = ""
    rows: list[TraceRow] = field(default_factory=list)

    def __post_init__(self):
        self._index: dict[tuple, TraceRow] | None = None

    def __len__(self) -> int:
        return len(self.rows)

    def lookup(self, cfg: Mapping) -> TraceRow | None:
        if self._index is None:
            self._index = {}
            for row in self.rows:
                self._index.setdefault(_key(row.cfg), row)
        return self._index.get(_key(cfg))

    def append(self, row: TraceRow) -> None:
        self.rows.append(row)
        if self._index is not None:
            self._index.setdefault(_key(row.cfg), row)

    def distinct_configurations(self) -> int:
        return len({_key(r.cfg) for r in self.rows})

    def measurements(self, space: TuningSpace | None = None) -> list[Measurement]:
        space = space or space_from_trace(self)
        out = []
        for row in self.rows:
            cfg = space.configuration(row.cfg)
            out.append(Measurement(cfg, row.status, row.runtime_ns, row.compile_ns))
        return out

    def dumps(self) -> str:
        header = json.dumps({"kind": TRACE_KIND, "v": TRACE_VERSION, "device": self.device,
                             "space_sha256": self.space_sha256})
        return "\n".join([header] + [r.to_json() for r in self.rows]) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def from_measurements(cls, measurements: Iterable[Measurement], device: str = "unknown",
                          space_sha256: str = "") -> "Trace":
        rows = [TraceRow(m.configuration.as_dict(), m.runtime_ns, m.compile_ns, m.status)
                for m in measurements]
        return cls(device, space_sha256, rows)


def loads_trace(text: str) -> Trace:
    lines = text.splitlines()
    if not lines:
        raise TraceError("empty trace", 1)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise TraceError(f"malformed header: {exc.msg}", 1) from exc
    if not isinstance(header, dict) or header.get("kind") != TRACE_KIND:
        raise TraceError("missing ktune-trace header", 1)
    if header.get("v") != TRACE_VERSION:
        raise TraceError(f"unsupported trace version {header.get('v')!r}", 1)
    trace = Trace(str(header.get("device", "unknown")), str(header.get("space_sha256", "")))
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceError(f"malformed JSON: {exc.msg}", lineno) from exc
        if not isinstance(doc, dict) or not isinstance(doc.get("cfg"), dict):
            raise TraceError("row needs a 'cfg' object", lineno)
        try:
            status = Status(doc.get("status"))
        except ValueError:
            raise TraceError(f"bad status {doc.get('status')!r}", lineno) from None
        runtime, compile_ns = doc.get("runtime_ns"), doc.get("compile_ns")
        for name, v in (("runtime_ns", runtime), ("compile_ns", compile_ns)):
            if v is not None and (isinstance(v, bool) or not isinstance(v, int) or v < 0):
                raise TraceError(f"{name} must be a non-negative integer or null", lineno)
        if status is Status.OK and not runtime:
            raise TraceError("ok row needs a positive runtime_ns", lineno)
        for k, v in doc["cfg"].items():
            if isinstance(v, bool) or not isinstance(v, (int, str)):
                raise TraceError(f"parameter {k}: unsupported value {v!r}", lineno)
        trace.rows.append(TraceRow(doc["cfg"], runtime if status is Status.OK else None,
                                   compile_ns, status))
    return trace


def read_trace(path: str | Path) -> Trace:
    return loads_trace(Path(path).read_text())


def space_from_trace(trace: Trace) -> TuningSpace:
    """Space whose valid configurations are exactly the trace's distinct rows."""
    if not trace.rows:
        raise TraceError("trace has no rows")
    names = list(trace.rows[0].cfg)
    values: dict[str, set] = {n: set() for n in names}
    for i, row in enumerate(trace.rows, 2):
        if set(row.cfg) != set(names):
            raise TraceError("rows assign different parameter sets", i)
        for n in names:
            values[n].add(row.cfg[n])
    params = [ParameterDomain(n, tuple(sorted(values[n]))) for n in names]
    members = {tuple(row.cfg[n] for n in names) for row in trace.rows}
    digest = hashlib.sha256(repr(sorted(members, key=repr)).encode()).hexdigest()[:16]
    names_t = tuple(names)
    constraint = Constraint.from_callable(
        lambda cfg: tuple(cfg[n] for n in names_t) in members, label=f"in-trace:{digest}")
    return TuningSpace(params, [constraint])
