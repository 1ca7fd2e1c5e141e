"""Tuning parameters, constraints, and enumeration of the constrained tuning space."""
from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator, Mapping, Sequence

from . import _expr
from .errors import ConstraintSyntaxError, EvaluationError, SpaceError

IDENTIFIER = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
INT64_MIN, INT64_MAX = -(2**63), 2**63 - 1

Value = int | str


@dataclass(frozen=True)
class ParameterDomain:
    name: str
    values: tuple[Value, ...]

    def __post_init__(self):
        values = tuple(self.values)
        object.__setattr__(self, "values", values)
        if not isinstance(self.name, str) or not IDENTIFIER.match(self.name):
            raise SpaceError(f"invalid parameter name {self.name!r}")
        if not values:
            raise SpaceError(f"empty domain for parameter {self.name}")
        kinds = set()
        for v in values:
            if isinstance(v, bool) or not isinstance(v, (int, str)):
                raise SpaceError(
                    f"parameter {self.name}: unsupported value {v!r} (only integers and strings)"
                )
            if isinstance(v, int) and not INT64_MIN <= v <= INT64_MAX:
                raise SpaceError(f"parameter {self.name}: value {v} outside int64 range")
            kinds.add(type(v))
        if len(kinds) > 1:
            raise SpaceError(f"parameter {self.name}: mixed integer and string values")
        if len(set(values)) != len(values):
            raise SpaceError(f"parameter {self.name}: duplicate values")

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True, eq=False)
class Constraint:
    """A predicate over parameter values.

    Built either from an expression string (see :mod:`ktune._expr` for the
    grammar) or from a Python callable receiving a mapping of parameter values.
    """

    referenced: frozenset[str]
    predicate: Callable[[Mapping[str, Any]], Any] = field(repr=False)
    source: str | None = None
    ast: Any = field(default=None, repr=False)
    label: str | None = None

    @classmethod
    def parse(cls, text: str) -> "Constraint":
        ast = _expr.parse(text)
        return cls(frozenset(_expr.names(ast)), _expr.compile_node(ast), text, ast)

    @classmethod
    def from_callable(cls, fn, referenced: Iterable[str] | None = None, label: str | None = None):
        """Wrap ``fn(values) -> bool``.

        Without ``referenced`` the predicate is only checked on complete
        configurations.
        """
        ref = frozenset(referenced) if referenced is not None else None
        return cls(ref, fn, None, None, label)

    def holds(self, values: Mapping[str, Any]) -> bool:
        result = self.predicate(values)
        if isinstance(result, str):
            raise EvaluationError(f"constraint {self.source!r} evaluated to a string")
        return bool(result)

    def __str__(self) -> str:
        return self.source or self.label or repr(self.predicate)


@dataclass(frozen=True, slots=True)
class Configuration:
    """One value per declared parameter, in declaration order."""

    names: tuple[str, ...]
    values: tuple[Value, ...]

    def __getitem__(self, name: str) -> Value:
        try:
            return self.values[self.names.index(name)]
        except ValueError:
            raise KeyError(name) from None

    def get(self, name: str, default=None):
        try:
            return self[name]
        except KeyError:
            return default

    def __iter__(self):
        return iter(self.names)

    def __len__(self) -> int:
        return len(self.names)

    def __contains__(self, name) -> bool:
        return name in self.names

    def keys(self):
        return self.names

    def items(self):
        return zip(self.names, self.values)

    def as_dict(self) -> dict[str, Value]:
        return dict(zip(self.names, self.values))

    def replace(self, name: str, value: Value) -> "Configuration":
        i = self.names.index(name)
        return Configuration(self.names, self.values[:i] + (value,) + self.values[i + 1:])

    def __repr__(self) -> str:
        inner = ", ".join(f"{n}={v!r}" for n, v in self.items())
        return f"Configuration({inner})"


def eval_constraint(c: Constraint, cfg: Mapping[str, Any]) -> bool:
    missing = [n for n in (c.referenced or ()) if n not in cfg]
    if missing:
        raise EvaluationError(f"configuration does not assign {', '.join(sorted(missing))}")
    return c.holds(cfg)


class TuningSpace:
    """Named parameter domains plus constraint predicates.

    Immutable after construction. ``enumerate()`` walks the cross product in
    odometer order (last-declared parameter fastest) and checks each
    constraint as soon as every parameter it references has been assigned,
    which prunes whole subtrees without changing order or membership.
    """

    def __init__(self, parameters: Sequence[ParameterDomain], constraints: Sequence[Constraint] = ()):
        self.parameters = tuple(parameters)
        self.constraints = tuple(constraints)
        self.names = tuple(p.name for p in self.parameters)
        if len(set(self.names)) != len(self.names):
            seen = set()
            dup = next(n for n in self.names if n in seen or seen.add(n))
            raise SpaceError(f"duplicate parameter {dup}")
        self._index = {n: i for i, n in enumerate(self.names)}
        self._domains = {p.name: p.values for p in self.parameters}
        self._position = {p.name: {v: i for i, v in enumerate(p.values)} for p in self.parameters}
        for c in self.constraints:
            for n in sorted(c.referenced or ()):
                if n not in self._index:
                    raise SpaceError(f"unknown parameter {n}")
        self._checks = self._schedule_checks()
        self._valid: tuple[Configuration, ...] | None = None

    def _schedule_checks(self) -> list[list[Constraint]]:
        dim = len(self.names)
        checks: list[list[Constraint]] = [[] for _ in range(max(dim, 1))]
        for c in self.constraints:
            if c.referenced is None:
                depth = dim - 1
            else:
                depth = max((self._index[n] for n in c.referenced), default=0)
            checks[max(depth, 0)].append(c)
        return checks

    # -- shape ----------------------------------------------------------
    @property
    def dimensionality(self) -> int:
        return len(self.parameters)

    @property
    def raw_cardinality(self) -> int:
        return math.prod(len(p) for p in self.parameters)

    def domain(self, name: str) -> tuple[Value, ...]:
        return self._domains[name]

    def value_position(self, name: str, value: Value) -> int:
        return self._position[name][value]

    # -- configurations -------------------------------------------------
    def configuration(self, values: Mapping[str, Value] | None = None, **kwargs) -> Configuration:
        """Build a configuration, checking names and domain membership (not constraints)."""
        given = dict(values or {}, **kwargs)
        extra = set(given) - set(self.names)
        if extra:
            raise SpaceError(f"unknown parameter {sorted(extra)[0]}")
        out = []
        for p in self.parameters:
            if p.name not in given:
                raise SpaceError(f"configuration missing parameter {p.name}")
            v = given[p.name]
            if v not in self._position[p.name] or isinstance(v, bool):
                raise SpaceError(f"value {v!r} not in domain of {p.name}")
            out.append(v)
        return Configuration(self.names, tuple(out))

    def satisfies(self, cfg: Mapping[str, Any]) -> bool:
        return all(c.holds(cfg) for c in self.constraints)

    def is_valid(self, cfg: Configuration) -> bool:
        if not isinstance(cfg, Configuration) or cfg.names != self.names:
            return False
        for n, v in cfg.items():
            if v not in self._position[n] or isinstance(v, bool):
                return False
        return self.satisfies(cfg)

    def enumerate(self) -> Iterator[Configuration]:
        names = self.names
        dim = len(names)
        if dim == 0:
            if all(c.holds({}) for c in self.constraints):
                yield Configuration((), ())
            return
        domains = [p.values for p in self.parameters]
        checks = self._checks
        env: dict[str, Value] = {}
        current: list[Value] = [None] * dim  # type: ignore[list-item]

        def walk(depth: int) -> Iterator[Configuration]:
            name = names[depth]
            preds = checks[depth]
            last = depth == dim - 1
            for v in domains[depth]:
                env[name] = v
                current[depth] = v
                if preds and not all(c.holds(env) for c in preds):
                    continue
                if last:
                    yield Configuration(names, tuple(current))
                else:
                    yield from walk(depth + 1)

        yield from walk(0)

    def __iter__(self) -> Iterator[Configuration]:
        return self.enumerate()

    def configurations(self) -> tuple[Configuration, ...]:
        """Materialized valid configurations (cached; needed for indexed sampling)."""
        if self._valid is None:
            self._valid = tuple(self.enumerate())
        return self._valid

    def cardinality(self) -> int:
        if self._valid is not None:
            return len(self._valid)
        if not self.constraints:
            return self.raw_cardinality
        return sum(1 for _ in self.enumerate())

    # -- serialization --------------------------------------------------
    def to_document(self) -> dict:
        constraints = []
        for c in self.constraints:
            if c.source is None:
                raise SpaceError(f"constraint {c} is a Python callable and cannot be serialized")
            constraints.append(c.source)
        return {
            "parameters": [{"name": p.name, "values": list(p.values)} for p in self.parameters],
            "constraints": constraints,
        }

    def dumps(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_document(), indent=indent)

    def sha256(self) -> str:
        doc = {
            "parameters": [{"name": p.name, "values": list(p.values)} for p in self.parameters],
            "constraints": [c.source if c.source is not None else f"<{c.label or 'callable'}>"
                            for c in self.constraints],
        }
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def __repr__(self) -> str:
        return f"TuningSpace({', '.join(f'{p.name}[{len(p)}]' for p in self.parameters)}, " \
               f"{len(self.constraints)} constraints)"


def space_cardinality(space: TuningSpace) -> int:
    return space.cardinality()


def enumerate_space(space: TuningSpace) -> Iterator[Configuration]:
    return space.enumerate()


def parse_space_definition(text: str) -> TuningSpace:
    """Parse a JSON space document::

        {"parameters": [{"name": "TILE", "values": [8, 16]}],
         "constraints": ["TILE % 8 == 0"]}
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpaceError(f"syntax error: {exc.msg} at line {exc.lineno} column {exc.colno} "
                         f"(position {exc.pos})") from exc
    if not isinstance(doc, dict):
        raise SpaceError("space definition must be a JSON object")
    unknown = set(doc) - {"parameters", "constraints"}
    if unknown:
        raise SpaceError(f"unknown key {sorted(unknown)[0]!r} in space definition")
    params_doc = doc.get("parameters")
    if not isinstance(params_doc, list):
        raise SpaceError("'parameters' must be a list")
    parameters = []
    seen = set()
    for i, p in enumerate(params_doc):
        if not isinstance(p, dict) or "name" not in p or "values" not in p:
            raise SpaceError(f"parameter #{i} must be an object with 'name' and 'values'")
        if not isinstance(p["values"], list):
            raise SpaceError(f"parameter {p['name']}: 'values' must be a list")
        if p["name"] in seen:
            raise SpaceError(f"duplicate parameter {p['name']}")
        seen.add(p["name"])
        parameters.append(ParameterDomain(p["name"], tuple(p["values"])))
    constraints = []
    for i, text_c in enumerate(doc.get("constraints", [])):
        if not isinstance(text_c, str):
            raise SpaceError(f"constraint #{i} must be a string")
        try:
            constraints.append(Constraint.parse(text_c))
        except ConstraintSyntaxError as exc:
            raise ConstraintSyntaxError(f"constraint #{i} {text_c!r}: {exc.message}",
                                        exc.position, text_c) from exc
    return TuningSpace(parameters, constraints)


def load_space(path: str | Path) -> TuningSpace:
    return parse_space_definition(Path(path).read_text())
