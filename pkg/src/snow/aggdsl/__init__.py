"""A small, side-effect-free language for aggregate features.

Aggregates such as "max Gleason sum over all regions" are written as
expressions like ``max(gleason_score_sum.*)`` rather than generated
general-purpose code, so they can be parsed, type-checked and evaluated
without executing anything.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .ast import Binary, Boolean, Call, Number, Ref, Unary
from .checker import DslSemanticError, check, references
from .interpreter import MISSING, DslRuntimeError, PatientValues, evaluate_node
from .parser import DslSyntaxError, parse_expression
from .printer import to_text

__all__ = [
    "AggregationProgram", "DslSyntaxError", "DslSemanticError", "DslRuntimeError", "MISSING",
    "parse", "evaluate", "to_text", "patient_values", "Binary", "Boolean", "Call", "Number", "Ref", "Unary",
]


@dataclass(frozen=True)
class AggregationProgram:
    feature: str
    source: str
    ast: object
    sources: tuple[str, ...]
    result_type: str | None = None

    def text(self) -> str:
        return to_text(self.ast)


def parse(
    text: str,
    feature: str = "",
    sources: Mapping[str, Sequence[str] | None] | None = None,
) -> AggregationProgram:
    """Parse (and, when ``sources`` is given, type-check) an aggregation program.

    ``sources`` maps each declared source feature to its subgroup labels, or
    None for scalar features.
    """
    node = parse_expression(text)
    result_type = None
    if sources is not None:
        undeclared = references(node) - set(sources)
        if undeclared:
            raise DslSemanticError(f"reference to undeclared source(s): {', '.join(sorted(undeclared))}")
        result_type = check(node, sources)
    declared = tuple(sources) if sources is not None else tuple(sorted(references(node)))
    return AggregationProgram(feature, text, node, declared, result_type)


def evaluate(prog: AggregationProgram, values: PatientValues) -> tuple[float | None, list[str]]:
    """Evaluate for one patient. Returns (value or None, warnings)."""
    return evaluate_node(prog.ast, values)


def patient_values(feature_values: Iterable) -> dict[str, dict]:
    """Group FeatureValues by patient into the mapping shape ``evaluate`` expects."""
    out: dict[str, dict] = {}
    for fv in feature_values:
        v = fv.value
        if isinstance(v, bool):
            v = float(v)
        per = out.setdefault(fv.patient_id, {})
        if fv.subgroup is None:
            per[fv.feature] = v
        else:
            per.setdefault(fv.feature, {})[fv.subgroup] = v
    return out
