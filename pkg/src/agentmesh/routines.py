"""Declarative routines: deterministic handlers bound to one side of a protocol.

A routine is a small spec (input schema, ordered tool invocations, output
mapping) executed by the interpreter below. Executing a routine never
touches a completion backend, so exchanges handled by routines on both
sides cost nothing.

Templates reference earlier values with ``$``-paths: ``$input.date`` is the
``date`` field of the (JSON-decoded) request body, ``$wx.temperature``
descends into the result a step bound to ``wx``. A string that does not
start with ``$`` is a literal.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

SENDER = "sender"
RECEIVER = "receiver"
SIDES = (SENDER, RECEIVER)

ToolRunner = Callable[[dict], Any]


class RoutineError(Exception):
    """Base class for routine failures."""


class RoutineSpecError(RoutineError):
    """The routine spec itself is malformed."""


class RoutineInputError(RoutineError):
    """The request body does not satisfy the routine's input schema.

    Callers fall back to model handling when they see this.
    """


class RoutineExecutionError(RoutineError):
    """A step failed: unknown tool, unknown binding, or bad reference."""


@dataclass(frozen=True)
class RoutineStep:
    tool: str
    args: dict
    bind: str


@dataclass(frozen=True)
class Routine:
    protocol_hash: str
    side: str
    input_schema: dict
    steps: tuple[RoutineStep, ...] = ()
    output_template: Any = field(default_factory=dict)

    def to_spec(self) -> dict:
        return {
            "protocol_hash": self.protocol_hash,
            "side": self.side,
            "input": self.input_schema,
            "steps": [{"tool": s.tool, "args": s.args, "bind": s.bind} for s in self.steps],
            "output": self.output_template,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_spec(), indent=2)


def routine_from_spec(spec: dict | str) -> Routine:
    """Parse and validate a routine spec (dict or JSON text)."""
    if isinstance(spec, str):
        try:
            spec = json.loads(spec)
        except ValueError as exc:
            raise RoutineSpecError(f"routine spec is not valid JSON: {exc}") from exc
    if not isinstance(spec, dict):
        raise RoutineSpecError("routine spec must be a JSON object")
    try:
        side = spec["side"]
        if side not in SIDES:
            raise RoutineSpecError(f"side must be one of {SIDES}, got {side!r}")
        steps = []
        for raw in spec.get("steps", []):
            if not isinstance(raw.get("args", {}), dict):
                raise RoutineSpecError("step args must be an object")
            steps.append(RoutineStep(
                tool=raw["tool"],
                args=dict(raw.get("args", {})),
                bind=raw.get("bind", "result"),
            ))
        return Routine(
            protocol_hash=spec["protocol_hash"],
            side=side,
            input_schema=dict(spec.get("input", {})),
            steps=tuple(steps),
            output_template=spec.get("output", {}),
        )
    except KeyError as exc:
        raise RoutineSpecError(f"routine spec missing field: {exc}") from exc


# ── schema validation ────────────────────────────────────────────────

_TYPE_CHECKS = {
    "string": lambda v: isinstance(v, str),
    "number": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
    "integer": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "boolean": lambda v: isinstance(v, bool),
    "object": lambda v: isinstance(v, dict),
    "array": lambda v: isinstance(v, list),
}


def validate_input(schema: dict, value: dict) -> None:
    """Check *value* against a minimal object schema (required keys plus
    per-property type names). Raises RoutineInputError on violation."""
    if not isinstance(value, dict):
        raise RoutineInputError("request body must decode to a JSON object")
    for key in schema.get("required", []):
        if key not in value:
            raise RoutineInputError(f"missing required field: {key}")
    for key, prop in schema.get("properties", {}).items():
        if key not in value:
            continue
        expected = prop.get("type")
        check = _TYPE_CHECKS.get(expected)
        if check is not None and not check(value[key]):
            raise RoutineInputError(f"field {key!r} is not of type {expected}")


# ── template resolution ──────────────────────────────────────────────

def _lookup(path: str, bindings: Mapping[str, Any]) -> Any:
    parts = path.split(".")
    if parts[0] not in bindings:
        raise RoutineExecutionError(f"unknown binding in reference: ${path}")
    value = bindings[parts[0]]
    for part in parts[1:]:
        if isinstance(value, Mapping) and part in value:
            value = value[part]
        else:
            raise RoutineExecutionError(f"cannot resolve ${path}: no field {part!r}")
    return value


def resolve_template(template: Any, bindings: Mapping[str, Any]) -> Any:
    if isinstance(template, str):
        if template.startswith("$$"):
            return template[1:]
        if template.startswith("$"):
            return _lookup(template[1:], bindings)
        return template
    if isinstance(template, dict):
        return {k: resolve_template(v, bindings) for k, v in template.items()}
    if isinstance(template, list):
        return [resolve_template(v, bindings) for v in template]
    return template


# ── execution ────────────────────────────────────────────────────────

def execute_routine(routine: Routine, body: str, tools: Mapping[str, ToolRunner]) -> str:
    """Run *routine* on a request body; returns the output body.

    Deterministic given tool results, and never invokes a completion
    backend. RoutineInputError means the body failed schema validation and
    the caller should handle the request with the model instead.
    """
    try:
        parsed = json.loads(body)
    except ValueError as exc:
        raise RoutineInputError(f"request body is not valid JSON: {exc}") from exc
    validate_input(routine.input_schema, parsed)

    bindings: dict[str, Any] = {"input": parsed}
    for step in routine.steps:
        if step.tool not in tools:
            raise RoutineExecutionError(f"routine references unknown tool {step.tool!r}")
        args = resolve_template(step.args, bindings)
        bindings[step.bind] = tools[step.tool](args)

    output = resolve_template(routine.output_template, bindings)
    if isinstance(output, str):
        return output
    return json.dumps(output)


# ── file store ───────────────────────────────────────────────────────

def routine_filename(protocol_hash: str, side: str) -> str:
    return f"{protocol_hash}.{side}.routine"


def save_routine(routine: Routine, directory: str) -> str:
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, routine_filename(routine.protocol_hash, routine.side))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(routine.to_json())
    return path


def load_routine(path: str) -> Routine:
    with open(path, "r", encoding="utf-8") as fh:
        return routine_from_spec(fh.read())
