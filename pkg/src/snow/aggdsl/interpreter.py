"""Evaluation with skip-missing semantics.

Reductions ignore missing operands and return missing when nothing is left;
arithmetic and comparisons propagate missing; ``and`` / ``or`` follow
three-valued (Kleene) logic; division by zero yields missing plus a warning.
"""

from __future__ import annotations

from typing import Mapping

from .ast import Binary, Boolean, Call, Number, Ref, Unary

MISSING = None

# Per-patient values: scalar features map to a number (or None), subgroup
# features map to {subgroup: number-or-None}.
PatientValues = Mapping[str, "float | None | Mapping[str, float | None]"]


class DslRuntimeError(RuntimeError):
    """Internal error: a type-checked program should never raise this."""


class _Vec(list):
    pass


def _truth(v):
    if v is MISSING:
        return MISSING
    return bool(v)


def _num(v):
    if v is MISSING:
        return MISSING
    return float(v)


class _Evaluator:
    def __init__(self, values: PatientValues):
        self.values = values
        self.warnings: list[str] = []

    def eval(self, node):
        method = getattr(self, "_" + type(node).__name__.lower())
        return method(node)

    def _number(self, node: Number):
        return node.value

    def _boolean(self, node: Boolean):
        return node.value

    def _ref(self, node: Ref):
        raw = self.values.get(node.feature, MISSING)
        if node.subgroup is None:
            if isinstance(raw, Mapping):
                raise DslRuntimeError(f"{node.feature} is a subgroup feature")
            return _num(raw)
        sub = raw if isinstance(raw, Mapping) else {}
        if node.is_wildcard:
            return _Vec(float(v) for k, v in sorted(sub.items()) if node.matches(k) and v is not MISSING)
        return _num(sub.get(node.subgroup, MISSING))

    def _unary(self, node: Unary):
        v = self.eval(node.operand)
        if v is MISSING:
            return MISSING
        if node.op == "-":
            return -float(v)
        return not bool(v)

    def _binary(self, node: Binary):
        op = node.op
        if op in ("and", "or"):
            a, b = _truth(self.eval(node.left)), _truth(self.eval(node.right))
            if op == "and":
                if a is False or b is False:
                    return False
                return MISSING if MISSING in (a, b) else True
            if a is True or b is True:
                return True
            return MISSING if MISSING in (a, b) else False
        a, b = self.eval(node.left), self.eval(node.right)
        if isinstance(a, _Vec) or isinstance(b, _Vec):
            if b is MISSING or a is MISSING:
                return _Vec()
            if isinstance(a, _Vec):
                return _Vec(_compare(op, x, float(b)) for x in a)
            return _Vec(_compare(op, float(a), y) for y in b)
        if a is MISSING or b is MISSING:
            return MISSING
        a, b = float(a), float(b)
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            return self._div(a, b)
        return _compare(op, a, b)

    def _div(self, a, b):
        if b == 0:
            self.warnings.append("division by zero; result is missing")
            return MISSING
        return a / b

    def _call(self, node: Call):
        args = [self.eval(a) for a in node.args]
        f = node.func
        if f in ("ratio", "percent"):
            a, b = args
            if a is MISSING or b is MISSING:
                return MISSING
            q = self._div(float(a), float(b))
            if q is MISSING or f == "ratio":
                return q
            return 100.0 * q
        flat = []
        for a in args:
            if isinstance(a, _Vec):
                flat.extend(a)
            elif a is not MISSING:
                flat.append(a)
        if not flat:
            return MISSING
        if f == "max":
            return max(float(x) for x in flat)
        if f == "min":
            return min(float(x) for x in flat)
        if f == "sum":
            return float(sum(float(x) for x in flat))
        if f == "mean":
            return sum(float(x) for x in flat) / len(flat)
        if f == "count":
            return float(len(flat))
        if f in ("count_nonzero", "count_if"):
            return float(sum(1 for x in flat if x))
        if f == "any":
            return any(bool(x) for x in flat)
        if f == "all":
            return all(bool(x) for x in flat)
        raise DslRuntimeError(f"unknown function {f}")


def _compare(op, a, b) -> bool:
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    if op == ">=":
        return a >= b
    if op == "==":
        return a == b
    if op == "!=":
        return a != b
    raise DslRuntimeError(f"unknown operator {op}")


def evaluate_node(node, values: PatientValues) -> tuple[float | None, list[str]]:
    """Evaluate a checked AST; booleans come back as 1.0 / 0.0."""
    ev = _Evaluator(values)
    try:
        out = ev.eval(node)
    except DslRuntimeError:
        raise
    except Exception as exc:  # totality: never let a program trap
        return MISSING, ev.warnings + [f"evaluation failed: {exc}"]
    if isinstance(out, _Vec):
        raise DslRuntimeError("program produced a vector")
    if isinstance(out, bool):
        out = 1.0 if out else 0.0
    return out, ev.warnings
