"""Aggregation agent: asks the model for a program and vets it before use."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .._seeding import rng_for
from ..llm.client import ChatRequest, LLMClient
from . import AggregationProgram, DslSemanticError, DslSyntaxError, evaluate, parse

MAX_ATTEMPTS = 2  # first try plus one repair

AGGREGATION_SYSTEM = """You write one expression in a small aggregation language.
References: feature (scalar), feature.* (all regions), feature.left_* (regions by prefix).
Functions: max, min, mean, sum, count, count_nonzero, any, all, count_if, ratio, percent.
Operators: + - * / comparisons, and, or, not. Missing values are skipped by reductions.
Reply with JSON: {"program": "<expression>"}."""


def aggregation_user(spec, sources: Mapping[str, Sequence[str] | None], diagnostics: str = "") -> str:
    lines = [f"Aggregated variable: {spec.name}", f"Description: {spec.description}",
             f"Computation: {spec.instructions}", "Declared sources:"]
    for name, subs in sources.items():
        lines.append(f"  {name}: " + ("scalar" if subs is None else f"per region ({len(subs)} labels)"))
    if diagnostics:
        lines.append(f"Your previous program was rejected: {diagnostics}")
    return "\n".join(lines)


@dataclass
class CodegenResult:
    feature: str
    program: AggregationProgram | None
    attempts: list[dict] = field(default_factory=list)  # {"text", "error"}
    removal_reason: str | None = None

    @property
    def accepted(self) -> bool:
        return self.program is not None


def dry_run_patients(sources: Mapping[str, Sequence[str] | None], seed: int = 0) -> list[dict]:
    """Three synthetic patients: fully observed, partly missing, fully missing."""
    rng = rng_for(seed, "dry-run")
    full, partial, empty = {}, {}, {}
    for name, subs in sources.items():
        if subs is None:
            full[name] = float(rng.integers(1, 10))
            partial[name] = None
            empty[name] = None
        else:
            full[name] = {s: float(rng.integers(0, 6)) for s in subs}
            partial[name] = {s: (float(rng.integers(0, 6)) if i % 2 else None) for i, s in enumerate(subs)}
            empty[name] = {s: None for s in subs}
    return [full, partial, empty]


def dry_run(prog: AggregationProgram, sources: Mapping[str, Sequence[str] | None], seed: int = 0) -> None:
    for i, patient in enumerate(dry_run_patients(sources, seed)):
        value, _ = evaluate(prog, patient)
        if value is not None and not math.isfinite(value):
            raise ValueError(f"dry run patient {i} produced a non-finite value")


def generate_program(
    client: LLMClient,
    spec,
    sources: Mapping[str, Sequence[str] | None],
    seed: int = 0,
    system_text: str | None = None,
) -> CodegenResult:
    """Request, parse, type-check and dry-run a program for an aggregated spec.

    ``sources`` maps each source feature to its subgroup labels (None for
    scalars). One repair attempt is made with the diagnostics of the first.
    """
    if not spec.aggregated or not spec.aggregation_sources:
        raise ValueError(f"{spec.name} is not an aggregated feature with sources")
    missing = [s for s in spec.aggregation_sources if s not in sources]
    if missing:
        raise ValueError(f"sources of {spec.name} not available: {missing}")
    declared = {s: sources[s] for s in spec.aggregation_sources}
    result = CodegenResult(spec.name, None)
    diagnostics = ""
    for attempt in range(MAX_ATTEMPTS):
        req = ChatRequest(
            "aggregation",
            system_text or AGGREGATION_SYSTEM,
            aggregation_user(spec, declared, diagnostics),
            "aggregation",
            seed=seed,
            context={"feature": spec.name, "sources": list(declared), "attempt": attempt},
        )
        text = client.complete_structured(req)["program"]
        try:
            prog = parse(text, spec.name, declared)
            dry_run(prog, declared, seed)
        except DslSyntaxError as exc:
            diagnostics = f"syntax error at line {exc.line}, column {exc.column}: {exc}"
        except (DslSemanticError, ValueError) as exc:
            diagnostics = f"semantic error: {exc}"
        else:
            result.attempts.append({"text": text, "error": None})
            result.program = prog
            return result
        result.attempts.append({"text": text, "error": diagnostics})
    result.removal_reason = f"codegen_failure: {diagnostics}"
    return result
